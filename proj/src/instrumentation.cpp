// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/instrumentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "contaccum/error.hpp"

namespace contaccum {

std::optional<double> grad_norm_ratio(double norm_lambda, double norm_theta) {
    if (norm_theta == 0.0) return std::nullopt;
    return norm_lambda / norm_theta;
}

std::map<std::size_t, Mat> bucket_by_age(const Mat& passages, std::span<const std::size_t> ages) {
    if (ages.size() != passages.rows()) throw ShapeError("bucket_by_age: one age per row required");
    std::map<std::size_t, std::vector<std::size_t>> rows;
    for (std::size_t i = 0; i < ages.size(); ++i) rows[ages[i]].push_back(i);
    std::map<std::size_t, Mat> out;
    for (const auto& [age, idx] : rows) out.emplace(age, gather_rows(passages, idx));
    return out;
}

std::map<std::size_t, double> sim_mass(const Mat& q_cur, const std::map<std::size_t, Mat>& banked_by_age,
                                       const Mat& p_cur, double tau, SimMassMode mode) {
    std::map<std::size_t, const Mat*> buckets;
    if (p_cur.rows() > 0) buckets[0] = &p_cur;
    for (const auto& [age, m] : banked_by_age) {
        if (age == 0) throw std::invalid_argument("sim_mass: banked ages must be >= 1");
        if (m.rows() > 0) buckets[age] = &m;
    }
    for (const auto& [age, m] : buckets) {
        if (m->cols() != q_cur.cols()) throw ShapeError("sim_mass: width mismatch in age bucket " + std::to_string(age));
    }
    std::map<std::size_t, double> out;
    if (q_cur.rows() == 0 || buckets.empty()) return out;
    const double nq = double(q_cur.rows());

    if (mode == SimMassMode::kRaw) {
        for (const auto& [age, m] : buckets) {
            const Mat s = matmul_nt(q_cur, *m);
            double sum = 0.0;
            for (double x : s.values()) sum += x;
            out[age] = sum / nq;
        }
        return out;
    }

    std::vector<const Mat*> parts;
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // (age, columns)
    for (const auto& [age, m] : buckets) {
        parts.push_back(m);
        spans.emplace_back(age, m->rows());
    }
    const Mat logp = row_log_softmax(matmul_nt(q_cur, vstack(parts, q_cur.cols())), tau);
    for (std::size_t i = 0; i < logp.rows(); ++i) {
        std::size_t col = 0;
        for (const auto& [age, n] : spans) {
            double mass = 0.0;
            for (std::size_t j = 0; j < n; ++j) mass += std::exp(logp(i, col + j));
            out[age] += mass / nq;
            col += n;
        }
    }
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty sequence");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<UpdatePoint> per_update(std::span<const StepStats> log, const std::string& strategy) {
    std::vector<UpdatePoint> out;
    std::size_t i = 0;
    while (i < log.size()) {
        if (log[i].strategy != strategy) {
            ++i;
            continue;
        }
        const std::size_t t = log[i].update;
        double ratio_sum = 0.0;
        std::size_t ratio_n = 0;
        double loss_sum = 0.0;
        std::size_t n = 0;
        for (; i < log.size() && log[i].strategy == strategy && log[i].update == t; ++i, ++n) {
            loss_sum += log[i].loss;
            if (log[i].grad_norm_ratio) {
                ratio_sum += *log[i].grad_norm_ratio;
                ++ratio_n;
            }
        }
        UpdatePoint p;
        p.update = t;
        p.loss = loss_sum / double(n);
        if (ratio_n > 0) p.ratio = ratio_sum / double(ratio_n);
        out.push_back(p);
    }
    return out;
}

std::vector<StrategySummary> aggregate(std::span<const StepStats> log, double window) {
    if (log.empty()) throw std::invalid_argument("aggregate: empty log");
    if (!(window > 0.0 && window <= 1.0)) throw std::invalid_argument("aggregate: window must be in (0, 1]");
    std::vector<std::string> order;
    for (const auto& s : log) {
        if (std::find(order.begin(), order.end(), s.strategy) == order.end()) order.push_back(s.strategy);
    }
    std::vector<StrategySummary> out;
    for (const auto& name : order) {
        const auto points = per_update(log, name);
        const std::size_t take = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(window * double(points.size()) - 1e-9)));
        std::vector<double> ratios, losses;
        for (std::size_t i = points.size() - take; i < points.size(); ++i) {
            losses.push_back(points[i].loss);
            if (points[i].ratio) ratios.push_back(*points[i].ratio);
        }
        StrategySummary s;
        s.strategy = name;
        s.updates = take;
        s.loss_median = median(losses);
        s.loss_mean = std::accumulate(losses.begin(), losses.end(), 0.0) / double(losses.size());
        s.loss_max = *std::max_element(losses.begin(), losses.end());
        if (!ratios.empty()) {
            s.ratio_median = median(ratios);
            s.ratio_mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / double(ratios.size());
            s.ratio_max = *std::max_element(ratios.begin(), ratios.end());
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace contaccum
