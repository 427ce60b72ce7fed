// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "contaccum/error.hpp"

namespace contaccum {

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

void write_metrics_csv(std::ostream& out, std::span<const StepStats> steps) {
    out << kMetricsHeader << '\n';
    for (const StepStats& s : steps) {
        out << s.update << ',' << s.substep << ',' << s.strategy << ',' << format_double(s.loss) << ','
            << format_double(s.grad_norm_q_pre) << ',' << format_double(s.grad_norm_p_pre) << ','
            << format_double(s.grad_norm_q_post) << ',' << format_double(s.grad_norm_p_post) << ','
            << (s.grad_norm_ratio ? format_double(*s.grad_norm_ratio) : std::string()) << ','
            << s.negatives_per_query << ',' << s.bank_fill_q << ',' << s.bank_fill_p << ',' << s.bank_bytes << ','
            << s.fwd_passes_cum << ',' << s.bwd_passes_cum << ',' << format_double(s.lr) << '\n';
    }
}

void write_eval_csv(std::ostream& out, std::span<const EvalRecord> evals) {
    out << kEvalHeader << '\n';
    auto get = [](const EvalRecord& r, const char* key) {
        auto it = r.metrics.find(key);
        return it == r.metrics.end() ? std::string() : format_double(it->second);
    };
    for (const EvalRecord& r : evals) {
        out << r.step << ',' << get(r, "top1") << ',' << get(r, "top5") << ',' << get(r, "top20") << ','
            << get(r, "recall20") << ',' << get(r, "ndcg10") << ',' << get(r, "ndcg20") << '\n';
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

class CsvReader {
public:
    CsvReader(const std::filesystem::path& path, const char* expected_header) : path_(path), in_(path) {
        if (!in_) throw std::runtime_error("cannot read " + path.string());
        std::string header;
        std::getline(in_, header);
        if (!header.empty() && header.back() == '\r') header.pop_back();
        if (header != expected_header) {
            throw std::runtime_error(path.string() + ": unexpected header '" + header + "'");
        }
    }

    bool next(std::vector<std::string>& fields, std::size_t expected) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            fields = split_csv_line(line);
            if (fields.size() != expected) fail("expected " + std::to_string(expected) + " fields");
            return true;
        }
        return false;
    }

    template <class T>
    T number(const std::string& field) const {
        T v{};
        auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc() || p != field.data() + field.size()) fail("bad number '" + field + "'");
        return v;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(path_.string() + " line " + std::to_string(line_no_ + 1) + ": " + what);
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::size_t line_no_ = 0;
};

}  // namespace

std::vector<StepStats> read_metrics_csv(const std::filesystem::path& path) {
    CsvReader csv(path, kMetricsHeader);
    std::vector<StepStats> out;
    std::vector<std::string> f;
    while (csv.next(f, 16)) {
        StepStats s;
        s.update = csv.number<std::size_t>(f[0]);
        s.substep = csv.number<std::size_t>(f[1]);
        s.strategy = f[2];
        s.loss = csv.number<double>(f[3]);
        s.grad_norm_q_pre = csv.number<double>(f[4]);
        s.grad_norm_p_pre = csv.number<double>(f[5]);
        s.grad_norm_q_post = csv.number<double>(f[6]);
        s.grad_norm_p_post = csv.number<double>(f[7]);
        if (!f[8].empty()) s.grad_norm_ratio = csv.number<double>(f[8]);
        s.negatives_per_query = csv.number<std::size_t>(f[9]);
        s.bank_fill_q = csv.number<std::size_t>(f[10]);
        s.bank_fill_p = csv.number<std::size_t>(f[11]);
        s.bank_bytes = csv.number<std::uint64_t>(f[12]);
        s.fwd_passes_cum = csv.number<std::uint64_t>(f[13]);
        s.bwd_passes_cum = csv.number<std::uint64_t>(f[14]);
        s.lr = csv.number<double>(f[15]);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<EvalRecord> read_eval_csv(const std::filesystem::path& path) {
    CsvReader csv(path, kEvalHeader);
    static const char* keys[] = {"top1", "top5", "top20", "recall20", "ndcg10", "ndcg20"};
    std::vector<EvalRecord> out;
    std::vector<std::string> f;
    while (csv.next(f, 7)) {
        EvalRecord r;
        r.step = csv.number<std::size_t>(f[0]);
        for (std::size_t i = 0; i < 6; ++i) {
            if (!f[i + 1].empty()) r.metrics[keys[i]] = csv.number<double>(f[i + 1]);
        }
        out.push_back(std::move(r));
    }
    return out;
}

RunData load_run(const std::filesystem::path& dir) {
    RunData run;
    run.label = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    run.steps = read_metrics_csv(dir / "metrics.csv");
    if (std::filesystem::exists(dir / "eval.csv")) run.evals = read_eval_csv(dir / "eval.csv");
    return run;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

std::string tick_label(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

// 1-2-5 ticks covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target) {
    const double span = hi - lo;
    const double raw = span / std::max(target, 1);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
        ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    }
    return ticks;
}

}  // namespace

std::string svg_line_chart(const ChartSpec& spec, std::span<const Series> series) {
    const double width = 760;
    const double height = 440;
    const double left = 70;
    const double right = 190;
    const double top = 40;
    const double bottom = 55;
    const double pw = width - left - right;
    const double ph = height - top - bottom;

    auto ty = [&](double y) { return spec.log_y ? std::log10(y) : y; };
    double x_lo = std::numeric_limits<double>::infinity();
    double x_hi = -x_lo;
    double y_lo = x_lo;
    double y_hi = -x_lo;
    for (const Series& s : series) {
        for (auto [x, y] : s.points) {
            if (!std::isfinite(y) || (spec.log_y && y <= 0.0)) continue;
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, ty(y));
            y_hi = std::max(y_hi, ty(y));
        }
    }
    const bool empty = !(x_lo <= x_hi);
    if (empty) {
        x_lo = 0;
        x_hi = 1;
        y_lo = 0;
        y_hi = 1;
    }
    if (x_hi == x_lo) x_hi = x_lo + 1;
    if (y_hi == y_lo) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    const double pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;
    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto py = [&](double v) { return top + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(spec.title) << "</text>\n";

    for (double t : nice_ticks(x_lo, x_hi, 6)) {
        o << "<line x1=\"" << num(px(t)) << "\" y1=\"" << num(top) << "\" x2=\"" << num(px(t)) << "\" y2=\""
          << num(top + ph) << "\" stroke=\"#eee\"/>\n";
        o << "<text x=\"" << num(px(t)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">"
          << tick_label(t) << "</text>\n";
    }
    std::vector<double> yticks;
    if (spec.log_y) {
        for (double e = std::ceil(y_lo); e <= y_hi; e += 1.0) yticks.push_back(e);
        if (yticks.size() < 2) yticks = nice_ticks(y_lo, y_hi, 4);
    } else {
        yticks = nice_ticks(y_lo, y_hi, 5);
    }
    for (double t : yticks) {
        o << "<line x1=\"" << num(left) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(left + pw) << "\" y2=\""
          << num(py(t)) << "\" stroke=\"#eee\"/>\n";
        o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(t) + 4) << "\" text-anchor=\"end\">"
          << tick_label(spec.log_y ? std::pow(10.0, t) : t) << "</text>\n";
    }
    o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 12) << "\" text-anchor=\"middle\">"
      << xml_escape(spec.x_label) << "</text>\n";
    o << "<text transform=\"translate(18," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(spec.y_label) << (spec.log_y ? " (log)" : "") << "</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const Series& s = series[i];
        const char* color = kPalette[i % std::size(kPalette)];
        std::string pts;
        for (auto [x, y] : s.points) {
            if (!std::isfinite(y) || (spec.log_y && y <= 0.0)) continue;
            pts += num(px(x)) + "," + num(py(ty(y))) + " ";
        }
        if (!pts.empty()) {
            o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
              << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"" << pts << "\"/>\n";
        }
        const double ly = top + 14 + 18 * double(i);
        o << "<line x1=\"" << num(left + pw + 12) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(left + pw + 34)
          << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\""
          << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
        o << "<text x=\"" << num(left + pw + 40) << "\" y=\"" << num(ly) << "\">" << xml_escape(s.label)
          << "</text>\n";
    }
    if (empty) {
        o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(top + ph / 2)
          << "\" text-anchor=\"middle\" fill=\"#888\">no data</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string summary_markdown(std::span<const RunData> runs, double window) {
    std::ostringstream o;
    char buf[64];
    auto f4 = [&](double x) {
        std::snprintf(buf, sizeof buf, "%.4f", x);
        return std::string(buf);
    };
    auto opt = [&](const std::optional<double>& x) { return x ? f4(*x) : std::string("undefined"); };
    o << "# Run summary\n\n";
    o << "Ratio statistics cover the final " << format_double(window * 100.0) << "% of updates (per-update mean over substeps).\n\n";
    o << "| run | strategy | updates | final loss | ratio median | ratio max | top1 | top5 | top20 | ndcg10 |\n";
    o << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const RunData& run : runs) {
        if (run.steps.empty()) {
            o << "| " << run.label << " | (no steps) | 0 | | | | | | | |\n";
            continue;
        }
        const auto summaries = aggregate(run.steps, window);
        for (const StrategySummary& s : summaries) {
            const auto points = per_update(run.steps, s.strategy);
            o << "| " << run.label << " | " << s.strategy << " | " << points.size() << " | "
              << f4(points.back().loss) << " | " << opt(s.ratio_median) << " | " << opt(s.ratio_max) << " | ";
            if (!run.evals.empty()) {
                const auto& m = run.evals.back().metrics;
                auto get = [&](const char* k) {
                    auto it = m.find(k);
                    return it == m.end() ? std::string() : f4(it->second);
                };
                o << get("top1") << " | " << get("top5") << " | " << get("top20") << " | " << get("ndcg10") << " |\n";
            } else {
                o << " | | | |\n";
            }
        }
    }
    return o.str();
}

void write_report(std::span<const RunData> runs, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<Series> loss;
    std::vector<Series> ratio;
    std::vector<Series> topk;
    for (const RunData& run : runs) {
        std::vector<std::string> names;
        for (const auto& s : run.steps) {
            if (std::find(names.begin(), names.end(), s.strategy) == names.end()) names.push_back(s.strategy);
        }
        for (const auto& name : names) {
            const std::string label = names.size() > 1 ? run.label + "/" + name : run.label;
            Series l{label, {}, false};
            Series r{label, {}, false};
            for (const UpdatePoint& p : per_update(run.steps, name)) {
                l.points.emplace_back(double(p.update), p.loss);
                if (p.ratio) r.points.emplace_back(double(p.update), *p.ratio);
            }
            loss.push_back(std::move(l));
            ratio.push_back(std::move(r));
        }
        Series t5{run.label + " top5", {}, false};
        Series t20{run.label + " top20", {}, true};
        for (const EvalRecord& e : run.evals) {
            if (auto it = e.metrics.find("top5"); it != e.metrics.end()) t5.points.emplace_back(double(e.step), it->second);
            if (auto it = e.metrics.find("top20"); it != e.metrics.end()) t20.points.emplace_back(double(e.step), it->second);
        }
        topk.push_back(std::move(t5));
        topk.push_back(std::move(t20));
    }
    auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(out_dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (out_dir / name).string());
        out << text;
    };
    write("loss.svg", svg_line_chart({"Training loss", "update", "loss", false}, loss));
    write("ratio.svg", svg_line_chart({"Gradient norm ratio (passage / query, post-clip)", "update", "ratio", true}, ratio));
    write("topk.svg", svg_line_chart({"Retrieval Top@k", "update", "accuracy", false}, topk));
    write("report.md", summary_markdown(runs, 0.25) +
                           "\n![loss](loss.svg)\n\n![ratio](ratio.svg)\n\n![topk](topk.svg)\n");
}

}  // namespace contaccum
