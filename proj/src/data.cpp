// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "contaccum/error.hpp"
#include "contaccum/kernels.hpp"

namespace contaccum {

Batch Batch::slice(std::size_t begin, std::size_t end) const {
    Batch b;
    b.queries = slice_rows(queries, begin, end);
    b.positives = slice_rows(positives, begin, end);
    b.hard = has_hard() ? slice_rows(hard, begin, end) : Mat(0, queries.cols());
    b.pair_ids.assign(pair_ids.begin() + std::ptrdiff_t(begin), pair_ids.begin() + std::ptrdiff_t(end));
    return b;
}

namespace {

Mat view_of(const Mat& latents, const Mat& projection, Rng& rng, double noise_std) {
    Mat x = matmul(latents, projection);
    add_inplace(x, gaussian(rng, x.rows(), x.cols(), noise_std));
    return x;
}

Mat draw_latents(Rng& rng, std::size_t n, std::size_t dim, const Mat& centers, double spread) {
    if (centers.rows() == 0) return gaussian(rng, n, dim, 1.0);
    Mat z(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = centers.row(rng.below(centers.rows()));
        auto zi = z.row(i);
        for (std::size_t j = 0; j < dim; ++j) zi[j] = c[j] + spread * rng.normal();
    }
    return z;
}

void add_row_to_all(Mat& m, const Mat& row) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += row(0, j);
    }
}

}  // namespace

SyntheticTask generate_task(Rng& rng, const TaskParams& params) {
    if (params.latent_dim == 0 || params.d_in == 0) {
        throw std::invalid_argument("generate_task: dimensions must be >= 1");
    }
    if (params.n_corpus < params.n_train || params.n_train == 0) {
        throw std::invalid_argument("generate_task: need 1 <= n_train <= n_corpus");
    }
    if (params.n_eval > params.n_corpus - params.n_train) {
        throw std::invalid_argument("generate_task: n_eval exceeds the number of distractors");
    }
    auto projection = [&](const std::optional<Mat>& fixed) {
        if (fixed) {
            if (fixed->rows() != params.latent_dim || fixed->cols() != params.d_in) {
                throw ShapeError("generate_task: projection must be latent_dim x d_in, got " +
                                 fixed->shape_str());
            }
            return *fixed;
        }
        return gaussian(rng, params.latent_dim, params.d_in, 1.0 / std::sqrt(double(params.latent_dim)));
    };

    SyntheticTask task;
    task.latent_dim = params.latent_dim;
    task.d_in = params.d_in;
    task.noise_std = params.noise_std;
    task.query_projection = projection(params.query_projection);
    task.passage_projection = projection(params.passage_projection);
    const Mat centers = gaussian(rng, params.n_topics, params.latent_dim, 1.0);

    const Mat z_train = draw_latents(rng, params.n_train, params.latent_dim, centers, params.topic_spread);
    task.train_queries = view_of(z_train, task.query_projection, rng, params.noise_std);
    const Mat train_passages = view_of(z_train, task.passage_projection, rng, params.noise_std);

    const std::size_t n_distract = params.n_corpus - params.n_train;
    const Mat z_distract = draw_latents(rng, n_distract, params.latent_dim, centers, params.topic_spread);
    const Mat distract_passages = view_of(z_distract, task.passage_projection, rng, params.noise_std);
    task.corpus = vstack(train_passages, distract_passages);
    task.train_pos.resize(params.n_train);
    std::iota(task.train_pos.begin(), task.train_pos.end(), std::size_t{0});

    const Mat z_eval = slice_rows(z_distract, 0, params.n_eval);
    task.eval_queries = view_of(z_eval, task.query_projection, rng, params.noise_std);
    task.eval_pos.resize(params.n_eval);
    std::iota(task.eval_pos.begin(), task.eval_pos.end(), params.n_train);

    if (params.input_offset > 0.0) {
        // Own stream so the offset leaves every other draw unchanged.
        Rng offset_rng = rng.derive(0x0ff5e7);
        const double std = params.input_offset / std::sqrt(double(params.d_in));
        const Mat offset_q = gaussian(offset_rng, 1, params.d_in, std);
        const Mat offset_p = gaussian(offset_rng, 1, params.d_in, std);
        add_row_to_all(task.train_queries, offset_q);
        add_row_to_all(task.eval_queries, offset_q);
        add_row_to_all(task.corpus, offset_p);
    }
    return task;
}

void mine_hard_negatives(SyntheticTask& task) {
    const auto& k = kernels::active();
    const std::size_t n = task.n_corpus();
    const std::size_t d = task.d_in;
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = std::sqrt(k.sum_sq(task.corpus.row(i).data(), d));

    task.hard_neg.assign(task.n_train(), 0);
    for (std::size_t q = 0; q < task.n_train(); ++q) {
        const std::size_t pos = task.train_pos[q];
        const double* pv = task.corpus.row(pos).data();
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = pos == 0 ? 1 : 0;
        for (std::size_t c = 0; c < n; ++c) {
            if (c == pos) continue;
            const double denom = norms[pos] * norms[c];
            const double cos = denom > 0.0 ? k.dot(pv, task.corpus.row(c).data(), d) / denom : 0.0;
            if (cos > best) {
                best = cos;
                best_idx = c;
            }
        }
        task.hard_neg[q] = best_idx;
    }
}

Batch sample_batch(const SyntheticTask& task, std::uint64_t seed, std::uint64_t step,
                   std::size_t n, bool with_hard) {
    if (n > task.n_train()) {
        throw std::invalid_argument("sample_batch: batch of " + std::to_string(n) + " from " +
                                    std::to_string(task.n_train()) + " training pairs");
    }
    if (with_hard && task.hard_neg.size() != task.n_train()) {
        throw StateError("sample_batch: hard negatives requested but not mined");
    }
    Rng rng = Rng(seed).derive(0xba7c4000ULL + step);
    // Partial Fisher-Yates over pair ids.
    std::vector<std::size_t> ids(task.n_train());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + std::size_t(rng.below(ids.size() - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(n);

    Batch b;
    b.pair_ids = ids;
    b.queries = gather_rows(task.train_queries, ids);
    std::vector<std::size_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = task.train_pos[ids[i]];
    b.positives = gather_rows(task.corpus, pos);
    if (with_hard) {
        std::vector<std::size_t> hard(n);
        for (std::size_t i = 0; i < n; ++i) hard[i] = task.hard_neg[ids[i]];
        b.hard = gather_rows(task.corpus, hard);
    } else {
        b.hard = Mat(0, task.d_in);
    }
    return b;
}

std::vector<std::size_t> positive_ranks(const EncoderState& enc_q, const EncoderState& enc_p,
                                        const SyntheticTask& task) {
    const Mat q = forward(enc_q, task.eval_queries, false).reps;
    const Mat p = forward(enc_p, task.corpus, false).reps;
    const auto& k = kernels::active();
    std::vector<double> scores(p.rows());
    std::vector<std::size_t> ranks(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        for (std::size_t c = 0; c < p.rows(); ++c) scores[c] = k.dot(q.row(i).data(), p.row(c).data(), q.cols());
        const std::size_t pos = task.eval_pos[i];
        const double s = scores[pos];
        std::size_t ahead = 0;
        for (std::size_t c = 0; c < p.rows(); ++c) {
            if (scores[c] > s || (scores[c] == s && c < pos)) ++ahead;
        }
        ranks[i] = ahead + 1;
    }
    return ranks;
}

std::map<std::string, double> metrics_from_ranks(std::span<const std::size_t> ranks,
                                                 std::span<const std::size_t> ks) {
    std::map<std::string, double> out;
    const double n = ranks.empty() ? 1.0 : double(ranks.size());
    for (std::size_t k : ks) {
        double hits = 0.0;
        double gain = 0.0;
        for (std::size_t r : ranks) {
            if (r <= k) {
                hits += 1.0;
                gain += 1.0 / std::log2(1.0 + double(r));
            }
        }
        const std::string suffix = std::to_string(k);
        out["top" + suffix] = hits / n;
        out["recall" + suffix] = hits / n;  // one positive per query
        out["ndcg" + suffix] = gain / n;    // ideal DCG is 1
    }
    return out;
}

std::map<std::string, double> evaluate(const EncoderState& enc_q, const EncoderState& enc_p,
                                       const SyntheticTask& task, std::span<const std::size_t> ks) {
    if (ks.empty()) throw std::invalid_argument("evaluate: no cutoffs given");
    for (std::size_t k : ks) {
        if (k == 0 || k > task.n_corpus()) {
            throw std::invalid_argument("evaluate: cutoff " + std::to_string(k) + " outside [1, corpus]");
        }
    }
    const auto ranks = positive_ranks(enc_q, enc_p, task);
    return metrics_from_ranks(ranks, ks);
}

// ---------------------------------------------------------------------------
// Binary dump.

namespace {

constexpr char kMagic[8] = {'C', 'A', 'T', 'A', 'S', 'K', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot write task file " + path.string());
    }
    template <typename T>
    void put(T v) {
        v = to_le(v);
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void put_mat(const Mat& m) {
        put<std::uint64_t>(m.rows());
        put<std::uint64_t>(m.cols());
        for (double x : m.values()) put(x);
    }
    void put_index(const std::vector<std::size_t>& v) {
        put<std::uint64_t>(v.size());
        for (std::size_t x : v) put<std::uint64_t>(x);
    }
    void raw(const char* p, std::size_t n) { out_.write(p, std::streamsize(n)); }
    void finish() {
        out_.flush();
        if (!out_) throw std::runtime_error("task file write failed");
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot read task file " + path.string());
    }
    template <typename T>
    T get() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw std::runtime_error("task file truncated");
        return to_le(v);
    }
    Mat get_mat() {
        const auto rows = get<std::uint64_t>();
        const auto cols = get<std::uint64_t>();
        if (cols != 0 && rows > (std::uint64_t{1} << 32) / cols) throw std::runtime_error("task file: matrix too large");
        std::vector<double> v(rows * cols);
        for (double& x : v) x = get<double>();
        return Mat(rows, cols, std::move(v));
    }
    std::vector<std::size_t> get_index() {
        const auto n = get<std::uint64_t>();
        if (n > (std::uint64_t{1} << 32)) throw std::runtime_error("task file: index too large");
        std::vector<std::size_t> v(n);
        for (auto& x : v) x = get<std::uint64_t>();
        return v;
    }
    void raw(char* p, std::size_t n) {
        in_.read(p, std::streamsize(n));
        if (!in_) throw std::runtime_error("task file truncated");
    }

private:
    std::ifstream in_;
};

}  // namespace

void save_task(const SyntheticTask& task, const std::filesystem::path& path) {
    Writer w(path);
    w.raw(kMagic, sizeof kMagic);
    w.put(kVersion);
    w.put<std::uint64_t>(task.latent_dim);
    w.put<std::uint64_t>(task.d_in);
    w.put(task.noise_std);
    w.put_mat(task.query_projection);
    w.put_mat(task.passage_projection);
    w.put_mat(task.train_queries);
    w.put_mat(task.corpus);
    w.put_index(task.train_pos);
    w.put_mat(task.eval_queries);
    w.put_index(task.eval_pos);
    w.put_index(task.hard_neg);
    w.finish();
}

SyntheticTask load_task(const std::filesystem::path& path) {
    Reader r(path);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw std::runtime_error("not a task file: " + path.string());
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw std::runtime_error("unsupported task file version " + std::to_string(version));
    SyntheticTask t;
    t.latent_dim = r.get<std::uint64_t>();
    t.d_in = r.get<std::uint64_t>();
    t.noise_std = r.get<double>();
    t.query_projection = r.get_mat();
    t.passage_projection = r.get_mat();
    t.train_queries = r.get_mat();
    t.corpus = r.get_mat();
    t.train_pos = r.get_index();
    t.eval_queries = r.get_mat();
    t.eval_pos = r.get_index();
    t.hard_neg = r.get_index();
    if (t.train_queries.cols() != t.d_in || t.corpus.cols() != t.d_in ||
        t.train_pos.size() != t.train_queries.rows() || t.eval_pos.size() != t.eval_queries.rows()) {
        throw std::runtime_error("task file: inconsistent shapes");
    }
    for (std::size_t i : t.train_pos) if (i >= t.corpus.rows()) throw std::runtime_error("task file: bad index");
    for (std::size_t i : t.eval_pos) if (i >= t.corpus.rows()) throw std::runtime_error("task file: bad index");
    for (std::size_t i : t.hard_neg) if (i >= t.corpus.rows()) throw std::runtime_error("task file: bad index");
    return t;
}

}  // namespace contaccum
