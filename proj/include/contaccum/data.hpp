// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic retrieval task with planted relevance.
//
// Each relevant pair shares a latent vector z. The query input is z Vq plus
// noise, the passage input is z Vp plus noise, with Vq and Vp independent
// random projections, so the two encoders must learn different maps into a
// shared space. Latents are drawn around a small set of topic centers; pairs
// from the same topic are the hard cases that only many negatives separate.
//
// The corpus holds every training positive followed by distractor passages.
// Evaluation queries are fresh query views of distractor latents, so their
// positives were never seen as training positives.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "contaccum/encoder.hpp"
#include "contaccum/numerics.hpp"

namespace contaccum {

struct TaskParams {
    std::size_t latent_dim = 16;
    std::size_t d_in = 32;
    std::size_t n_train = 2048;
    std::size_t n_corpus = 4096;
    std::size_t n_eval = 500;
    double noise_std = 0.5;
    // 0 draws latents from N(0, I); otherwise from topic centers ~ N(0, I)
    // plus topic_spread * N(0, I).
    std::size_t n_topics = 0;
    double topic_spread = 0.5;
    // Norm of a shared vector added to every query input (and of another added
    // to every passage input). Gives the representations a common component,
    // the way pretrained text encoders produce anisotropic embeddings.
    double input_offset = 0.0;
    // Fixed projections (latent_dim x d_in) instead of random ones.
    std::optional<Mat> query_projection;
    std::optional<Mat> passage_projection;
};

struct SyntheticTask {
    std::size_t latent_dim = 0;
    std::size_t d_in = 0;
    double noise_std = 0.0;
    Mat query_projection;
    Mat passage_projection;
    Mat train_queries;                  // n_train x d_in
    Mat corpus;                         // n_corpus x d_in; rows [0, n_train) are training positives
    std::vector<std::size_t> train_pos; // corpus row of each training positive
    Mat eval_queries;                   // n_eval x d_in
    std::vector<std::size_t> eval_pos;  // corpus row of each eval positive
    std::vector<std::size_t> hard_neg;  // per training query; empty until mined

    std::size_t n_train() const noexcept { return train_queries.rows(); }
    std::size_t n_corpus() const noexcept { return corpus.rows(); }

    friend bool operator==(const SyntheticTask&, const SyntheticTask&) = default;
};

struct Batch {
    Mat queries;    // n x d_in
    Mat positives;  // n x d_in
    Mat hard;       // n x d_in, or 0 rows without hard negatives
    std::vector<std::size_t> pair_ids;

    std::size_t size() const noexcept { return queries.rows(); }
    bool has_hard() const noexcept { return hard.rows() > 0; }
    // Rows [begin, end) of every block.
    Batch slice(std::size_t begin, std::size_t end) const;
};

SyntheticTask generate_task(Rng& rng, const TaskParams& params);

// For every training query: the non-positive corpus row with the largest input-space
// cosine to its positive, ties to the lowest index.
void mine_hard_negatives(SyntheticTask& task);

// n distinct pairs without replacement, deterministic in (seed, step).
Batch sample_batch(const SyntheticTask& task, std::uint64_t seed, std::uint64_t step,
                   std::size_t n, bool with_hard);

// Rank (1-based) of each evaluation query's positive among the full corpus,
// ordered by (-score, corpus index).
std::vector<std::size_t> positive_ranks(const EncoderState& enc_q, const EncoderState& enc_p,
                                        const SyntheticTask& task);

// Keys "top{k}", "recall{k}", "ndcg{k}" for each k.
std::map<std::string, double> evaluate(const EncoderState& enc_q, const EncoderState& enc_p,
                                       const SyntheticTask& task, std::span<const std::size_t> ks);

// Ranks -> metrics; shared by evaluate() and tests.
std::map<std::string, double> metrics_from_ranks(std::span<const std::size_t> ranks,
                                                 std::span<const std::size_t> ks);

// Versioned little-endian binary dump ("CATASK" magic, format version 1).
void save_task(const SyntheticTask& task, const std::filesystem::path& path);
SyntheticTask load_task(const std::filesystem::path& path);

}  // namespace contaccum
