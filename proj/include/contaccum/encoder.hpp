// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy query/passage encoders with hand-written forward and backward passes.
//
//   linear:  reps = X W + b
//   mlp:     H = tanh(X W1 + b1),  reps = H W2 + b2
//
// Representations are used as-is (no length normalization); similarity is
// the raw dot product.

#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "contaccum/numerics.hpp"

namespace contaccum {

enum class EncoderKind { kLinear, kMlp };

std::string_view to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);

struct EncoderState {
    EncoderKind kind = EncoderKind::kLinear;
    std::size_t d_in = 0;
    std::size_t d_model = 0;
    std::size_t hidden = 0;  // mlp only
    // linear: {W, b};  mlp: {W1, b1, W2, b2}. Biases are 1 x width.
    std::vector<Mat> params;

    friend bool operator==(const EncoderState&, const EncoderState&) = default;
};

// Activations kept by a capturing forward pass; exactly what a
// no-capture pass skips.
struct ForwardTape {
    Mat input;
    Mat hidden;  // tanh output, mlp only
};

// One gradient matrix per parameter, shape-matched to EncoderState::params.
struct GradBuffer {
    std::vector<Mat> grads;

    static GradBuffer zeros_like(const EncoderState& enc);
    void add(const GradBuffer& other);
    void scale(double alpha);
    double norm() const;
};

struct ForwardResult {
    Mat reps;
    std::optional<ForwardTape> tape;
};

EncoderState init_encoder(Rng& rng, EncoderKind kind, std::size_t d_in, std::size_t d_model,
                          std::size_t hidden);

ForwardResult forward(const EncoderState& enc, const Mat& inputs, bool capture);

// Gradient of sum_ij upstream_ij * reps_ij with respect to the parameters.
GradBuffer backward(const EncoderState& enc, const std::optional<ForwardTape>& tape,
                    const Mat& upstream);

std::size_t parameter_count(const EncoderState& enc);

}  // namespace contaccum
