// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "contaccum/encoder.hpp"
#include "contaccum/error.hpp"
#include "test_util.hpp"

namespace contaccum {
namespace {

using testing::random_mat;

EncoderState make(EncoderKind kind, std::uint64_t seed, std::size_t d_in = 6, std::size_t d_model = 4,
                  std::size_t hidden = 5) {
    Rng rng(seed);
    EncoderState e = init_encoder(rng, kind, d_in, d_model, hidden);
    // Nonzero biases so their gradients are exercised.
    for (std::size_t i = 1; i < e.params.size(); i += 2) e.params[i] = random_mat(seed + 50 + i, 1, e.params[i].cols(), 0.3);
    return e;
}

// sum(upstream .* forward(enc, x)) straight from the definition.
double probe(const EncoderState& e, const Mat& x, const Mat& up) {
    const Mat r = forward(e, x, false).reps;
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r.values()[i] * up.values()[i];
    return s;
}

TEST(Encoder, ZeroParametersGiveZeroReps) {
    for (auto kind : {EncoderKind::kLinear, EncoderKind::kMlp}) {
        EncoderState e = make(kind, 1);
        for (Mat& p : e.params) p = Mat(p.rows(), p.cols());
        const Mat reps = forward(e, random_mat(2, 3, 6), false).reps;
        for (double v : reps.values()) EXPECT_EQ(v, 0.0);
    }
}

TEST(Encoder, IdentityLinear) {
    EncoderState e = make(EncoderKind::kLinear, 1, 4, 4);
    e.params[0] = Mat::identity(4);
    e.params[1] = Mat(1, 4);
    const Mat x = random_mat(3, 5, 4);
    EXPECT_EQ(forward(e, x, false).reps, x);
}

TEST(Encoder, MlpMatchesStraightLineOracle) {
    const EncoderState e = make(EncoderKind::kMlp, 2);
    const Mat x = random_mat(4, 7, 6);
    const Mat& w1 = e.params[0];
    const Mat& b1 = e.params[1];
    const Mat& w2 = e.params[2];
    const Mat& b2 = e.params[3];
    const Mat got = forward(e, x, false).reps;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::vector<double> h(5);
        for (std::size_t j = 0; j < 5; ++j) {
            double s = b1(0, j);
            for (std::size_t i = 0; i < 6; ++i) s += x(r, i) * w1(i, j);
            h[j] = std::tanh(s);
        }
        for (std::size_t c = 0; c < 4; ++c) {
            double s = b2(0, c);
            for (std::size_t j = 0; j < 5; ++j) s += h[j] * w2(j, c);
            EXPECT_NEAR(got(r, c), s, 1e-12);
        }
    }
}

TEST(Encoder, CaptureDoesNotChangeReps) {
    const EncoderState e = make(EncoderKind::kMlp, 3);
    const Mat x = random_mat(5, 4, 6);
    const auto a = forward(e, x, true), b = forward(e, x, false);
    EXPECT_EQ(a.reps, b.reps);
    EXPECT_TRUE(a.tape.has_value());
    EXPECT_FALSE(b.tape.has_value());
}

TEST(Encoder, ShapeAndTapeErrors) {
    const EncoderState e = make(EncoderKind::kMlp, 3);
    EXPECT_THROW(forward(e, Mat(2, 5), false), ShapeError);
    const auto f = forward(e, Mat(2, 6), false);
    EXPECT_THROW(backward(e, f.tape, Mat(2, 4)), StateError);
    const auto g = forward(e, Mat(2, 6), true);
    EXPECT_THROW(backward(e, g.tape, Mat(3, 4)), ShapeError);
}

class EncoderFd : public ::testing::TestWithParam<std::tuple<EncoderKind, std::uint64_t>> {};

TEST_P(EncoderFd, BackwardMatchesCentralDifferences) {
    const auto [kind, seed] = GetParam();
    EncoderState e = make(kind, seed);
    const Mat x = random_mat(seed + 10, 4, 6);
    const Mat up = random_mat(seed + 20, 4, 4);
    const GradBuffer g = backward(e, forward(e, x, true).tape, up);
    const double h = 1e-6;
    for (std::size_t p = 0; p < e.params.size(); ++p) {
        for (std::size_t i = 0; i < e.params[p].size(); ++i) {
            double& w = e.params[p].values()[i];
            const double saved = w;
            w = saved + h;
            const double fp = probe(e, x, up);
            w = saved - h;
            const double fm = probe(e, x, up);
            w = saved;
            const double numeric = (fp - fm) / (2 * h);
            const double analytic = g.grads[p].values()[i];
            if (std::abs(analytic) < 1e-10) {
                EXPECT_NEAR(numeric, analytic, 1e-8);
            } else {
                EXPECT_LE(std::abs(numeric - analytic) / std::max(std::abs(analytic), std::abs(numeric)), 1e-6)
                    << "param " << p << " entry " << i;
            }
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Kinds, EncoderFd,
                         ::testing::Combine(::testing::Values(EncoderKind::kLinear, EncoderKind::kMlp),
                                            ::testing::Values(1u, 2u, 3u)));

TEST(Encoder, BackwardIsLinearInUpstream) {
    const EncoderState e = make(EncoderKind::kMlp, 5);
    const Mat x = random_mat(1, 3, 6);
    const auto f = forward(e, x, true);
    Mat up = random_mat(2, 3, 4);
    const GradBuffer g1 = backward(e, f.tape, up);
    scale_inplace(up, -2.5);
    GradBuffer g2 = backward(e, f.tape, up);
    g2.scale(-1.0 / 2.5);
    for (std::size_t p = 0; p < g1.grads.size(); ++p) EXPECT_LE(testing::max_abs_diff(g1.grads[p], g2.grads[p]), 1e-13);

    const GradBuffer z = backward(e, f.tape, Mat(3, 4));
    EXPECT_EQ(z.norm(), 0.0);
}

TEST(Encoder, BackwardIsAdditiveOverRows) {
    const EncoderState e = make(EncoderKind::kMlp, 6);
    const Mat x = random_mat(1, 6, 6);
    const Mat up = random_mat(2, 6, 4);
    const GradBuffer whole = backward(e, forward(e, x, true).tape, up);
    GradBuffer parts = backward(e, forward(e, slice_rows(x, 0, 2), true).tape, slice_rows(up, 0, 2));
    parts.add(backward(e, forward(e, slice_rows(x, 2, 6), true).tape, slice_rows(up, 2, 6)));
    for (std::size_t p = 0; p < whole.grads.size(); ++p) {
        EXPECT_LE(max_rel_diff(parts.grads[p], whole.grads[p]), 1e-13);
    }
}

TEST(Encoder, InitIsDeterministicWithZeroBiases) {
    Rng a(7), b(7);
    const EncoderState ea = init_encoder(a, EncoderKind::kMlp, 8, 4, 6);
    const EncoderState eb = init_encoder(b, EncoderKind::kMlp, 8, 4, 6);
    EXPECT_EQ(ea, eb);
    for (double v : ea.params[1].values()) EXPECT_EQ(v, 0.0);
    for (double v : ea.params[3].values()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(parameter_count(ea), 8u * 6 + 6 + 6 * 4 + 4);
    Rng c(1);
    EXPECT_THROW(init_encoder(c, EncoderKind::kLinear, 0, 4, 0), std::invalid_argument);
}

TEST(Encoder, InitWeightScale) {
    Rng rng(11);
    const EncoderState e = init_encoder(rng, EncoderKind::kLinear, 64, 157, 0);
    const Mat& w = e.params[0];
    ASSERT_GE(w.size(), 10000u);
    double sq = 0.0;
    for (double v : w.values()) sq += v * v;
    const double sd = std::sqrt(sq / double(w.size()));
    EXPECT_NEAR(sd, 1.0 / 8.0, 0.1 / 8.0);
}

TEST(Encoder, KindNames) {
    EXPECT_EQ(parse_encoder_kind("mlp"), EncoderKind::kMlp);
    EXPECT_EQ(to_string(EncoderKind::kLinear), "linear");
    EXPECT_THROW(parse_encoder_kind("bert"), std::invalid_argument);
}

}  // namespace
}  // namespace contaccum
