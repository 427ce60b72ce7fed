// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/encoder.hpp"

#include <cmath>
#include <string>

#include "contaccum/error.hpp"
#include "contaccum/kernels.hpp"

namespace contaccum {

std::string_view to_string(EncoderKind kind) {
    return kind == EncoderKind::kLinear ? "linear" : "mlp";
}

EncoderKind parse_encoder_kind(std::string_view name) {
    if (name == "linear") return EncoderKind::kLinear;
    if (name == "mlp") return EncoderKind::kMlp;
    throw std::invalid_argument("unknown encoder kind '" + std::string(name) + "'");
}

GradBuffer GradBuffer::zeros_like(const EncoderState& enc) {
    GradBuffer g;
    g.grads.reserve(enc.params.size());
    for (const Mat& p : enc.params) g.grads.emplace_back(p.rows(), p.cols());
    return g;
}

void GradBuffer::add(const GradBuffer& other) {
    if (other.grads.size() != grads.size()) throw ShapeError("GradBuffer::add: parameter count");
    for (std::size_t i = 0; i < grads.size(); ++i) add_inplace(grads[i], other.grads[i]);
}

void GradBuffer::scale(double alpha) {
    for (Mat& g : grads) scale_inplace(g, alpha);
}

double GradBuffer::norm() const { return global_l2_norm(grads); }

EncoderState init_encoder(Rng& rng, EncoderKind kind, std::size_t d_in, std::size_t d_model,
                          std::size_t hidden) {
    if (d_in == 0 || d_model == 0 || (kind == EncoderKind::kMlp && hidden == 0)) {
        throw std::invalid_argument("init_encoder: widths must be >= 1");
    }
    EncoderState enc;
    enc.kind = kind;
    enc.d_in = d_in;
    enc.d_model = d_model;
    if (kind == EncoderKind::kLinear) {
        enc.params.push_back(gaussian(rng, d_in, d_model, 1.0 / std::sqrt(double(d_in))));
        enc.params.emplace_back(1, d_model);
    } else {
        enc.hidden = hidden;
        enc.params.push_back(gaussian(rng, d_in, hidden, 1.0 / std::sqrt(double(d_in))));
        enc.params.emplace_back(1, hidden);
        enc.params.push_back(gaussian(rng, hidden, d_model, 1.0 / std::sqrt(double(hidden))));
        enc.params.emplace_back(1, d_model);
    }
    return enc;
}

namespace {

// x W + b, with b broadcast over rows.
Mat affine(const Mat& x, const Mat& w, const Mat& b) {
    Mat out = matmul(x, w);
    const auto& k = kernels::active();
    for (std::size_t r = 0; r < out.rows(); ++r) k.axpy(1.0, b.data(), out.row(r).data(), b.cols());
    return out;
}

}  // namespace

ForwardResult forward(const EncoderState& enc, const Mat& inputs, bool capture) {
    if (inputs.cols() != enc.d_in) {
        throw ShapeError("encoder forward: inputs " + inputs.shape_str() + " but d_in = " +
                         std::to_string(enc.d_in));
    }
    ForwardResult result;
    if (enc.kind == EncoderKind::kLinear) {
        result.reps = affine(inputs, enc.params[0], enc.params[1]);
        if (capture) result.tape = ForwardTape{inputs, Mat()};
        return result;
    }
    Mat hidden = affine(inputs, enc.params[0], enc.params[1]);
    for (double& h : hidden.values()) h = std::tanh(h);
    result.reps = affine(hidden, enc.params[2], enc.params[3]);
    if (capture) result.tape = ForwardTape{inputs, std::move(hidden)};
    return result;
}

GradBuffer backward(const EncoderState& enc, const std::optional<ForwardTape>& tape,
                    const Mat& upstream) {
    if (!tape) throw StateError("encoder backward: forward pass ran without activation capture");
    if (upstream.cols() != enc.d_model || upstream.rows() != tape->input.rows()) {
        throw ShapeError("encoder backward: upstream " + upstream.shape_str() + " for a batch of " +
                         std::to_string(tape->input.rows()) + " rows, d_model " +
                         std::to_string(enc.d_model));
    }
    GradBuffer g;
    if (enc.kind == EncoderKind::kLinear) {
        g.grads.push_back(matmul_tn(tape->input, upstream));
        g.grads.push_back(col_sums(upstream));
        return g;
    }
    // d hidden = upstream W2^T, then through tanh' = 1 - h^2.
    Mat d_hidden = matmul_nt(upstream, enc.params[2]);
    const auto h = tape->hidden.values();
    auto dh = d_hidden.values();
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= 1.0 - h[i] * h[i];
    g.grads.push_back(matmul_tn(tape->input, d_hidden));
    g.grads.push_back(col_sums(d_hidden));
    g.grads.push_back(matmul_tn(tape->hidden, upstream));
    g.grads.push_back(col_sums(upstream));
    return g;
}

std::size_t parameter_count(const EncoderState& enc) {
    std::size_t n = 0;
    for (const Mat& p : enc.params) n += p.size();
    return n;
}

}  // namespace contaccum
