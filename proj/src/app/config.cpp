// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "contaccum/error.hpp"

namespace contaccum {

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        // strategy
        {"strategy", "fullbatch", "fullbatch | gradaccum | gradcache | prebatch | contaccum"},
        {"n_local", "8", "local batch size (pairs per similarity matrix for accumulating strategies)"},
        {"accum_steps", "1", "accumulation steps K; total batch = n_local * K"},
        {"n_memory_q", "0", "query bank capacity"},
        {"n_memory_p", "0", "passage bank capacity"},
        {"tau", "1", "softmax temperature"},
        {"use_hard_negatives", "false", "add one mined hard negative per query"},
        {"enable_bank_after_step", "none", "bank strategies: ignore the bank before this update"},
        {"disable_query_bank_at_step", "none", "contaccum: drop the query bank from this update on"},
        {"refresh_bank", "false", "re-encode banked inputs with the current encoders every update"},
        // model
        {"encoder", "mlp", "linear | mlp"},
        {"d_model", "32", "representation width"},
        {"hidden", "64", "mlp hidden width"},
        // optimizer
        {"profile", "desk", "desk (lr 1e-3, warmup 5%) | bert (lr 2e-5, warmup 1237)"},
        {"peak_lr", "", "peak learning rate (default from profile)"},
        {"warmup_steps", "", "warmup updates (default from profile)"},
        {"total_steps", "200", "optimizer updates"},
        {"clip_norm", "2", "per-encoder gradient norm cap"},
        {"beta1", "0.9", "AdamW beta1"},
        {"beta2", "0.999", "AdamW beta2"},
        {"adam_eps", "1e-08", "AdamW epsilon"},
        {"weight_decay", "0", "AdamW decoupled weight decay"},
        // task
        {"latent_dim", "16", "latent relevance dimension"},
        {"d_in", "32", "encoder input width"},
        {"n_train", "2048", "training pairs"},
        {"n_corpus", "4096", "corpus passages (training positives + distractors)"},
        {"n_eval", "500", "held-out evaluation queries"},
        {"noise_std", "0.5", "input noise"},
        {"n_topics", "0", "latent topic centers (0: isotropic latents)"},
        {"topic_spread", "0.5", "latent spread around a topic center"},
        {"input_offset", "0", "norm of a shared offset added to all query inputs (and another for passages)"},
        {"task_file", "", "load the task from this dump instead of generating it"},
        {"export_task", "false", "train: also write task.bin"},
        // schedule / run
        {"eval_every", "0", "evaluate every N updates (0: final only)"},
        {"ks", "1,5,10,20", "extra retrieval cutoffs reported in summary.json"},
        {"seed", "0", "run seed (task, init, batches)"},
    };
    return keys;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool known_key(const std::string& key) {
    const auto& keys = config_keys();
    return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

class Typed {
public:
    explicit Typed(const ConfigDocument& doc) : doc_(doc) {}

    std::string str(const std::string& key) const {
        if (auto it = doc_.values.find(key); it != doc_.values.end()) return it->second;
        for (const auto& k : config_keys()) {
            if (k.name == key) return k.default_value;
        }
        throw ConfigError(key, "unknown key");
    }
    bool is_set(const std::string& key) const {
        auto it = doc_.values.find(key);
        return it != doc_.values.end() && !it->second.empty();
    }

    std::uint64_t u64(const std::string& key) const {
        const std::string v = str(key);
        std::uint64_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || p != v.data() + v.size()) {
            throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
        }
        return out;
    }
    std::size_t count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }
    std::size_t positive(const std::string& key) const {
        const std::size_t v = count(key);
        if (v == 0) throw ConfigError(key, "must be >= 1");
        return v;
    }

    double real(const std::string& key) const {
        const std::string v = str(key);
        double out = 0.0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
            throw ConfigError(key, "expected a finite number, got '" + v + "'");
        }
        return out;
    }

    bool flag(const std::string& key) const {
        const std::string v = str(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError(key, "expected true/false, got '" + v + "'");
    }

    std::optional<std::size_t> optional_index(const std::string& key) const {
        const std::string v = str(key);
        if (v.empty() || v == "none") return std::nullopt;
        return count(key);
    }

private:
    const ConfigDocument& doc_;
};

std::string fmt_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

void ConfigDocument::set(const std::string& key, const std::string& value) {
    if (key.rfind("sweep.", 0) == 0) {
        const std::string axis = key.substr(6);
        if (!known_key(axis)) throw ConfigError(key, "sweep over unknown key '" + axis + "'");
        auto values_list = split_list(value);
        if (values_list.empty()) throw ConfigError(key, "sweep axis needs at least one value");
        auto it = std::find_if(sweep_axes.begin(), sweep_axes.end(), [&](const auto& a) { return a.first == axis; });
        if (it != sweep_axes.end()) {
            it->second = std::move(values_list);
        } else {
            sweep_axes.emplace_back(axis, std::move(values_list));
        }
        return;
    }
    if (!known_key(key)) throw ConfigError(key, "unknown key");
    values[key] = value;
}

ConfigDocument parse_document(const std::string& text) {
    ConfigDocument doc;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("", "line " + std::to_string(lineno) + ": expected key = value, got '" + body + "'");
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) throw ConfigError("", "line " + std::to_string(lineno) + ": empty key");
        doc.set(key, trim(std::string_view(body).substr(eq + 1)));
    }
    return doc;
}

ExperimentConfig build_config(const ConfigDocument& doc) {
    const Typed t(doc);
    ExperimentConfig c;

    c.strategy.kind = parse_strategy(t.str("strategy"));
    c.strategy.n_local = t.positive("n_local");
    c.strategy.accum_steps = t.positive("accum_steps");
    c.strategy.n_memory_q = t.count("n_memory_q");
    c.strategy.n_memory_p = t.count("n_memory_p");
    c.strategy.tau = t.real("tau");
    c.strategy.use_hard_negatives = t.flag("use_hard_negatives");
    c.strategy.enable_bank_after_step = t.optional_index("enable_bank_after_step");
    c.strategy.disable_query_bank_at_step = t.optional_index("disable_query_bank_at_step");
    c.strategy.refresh_bank = t.flag("refresh_bank");
    c.strategy.validate();

    try {
        c.model.kind = parse_encoder_kind(t.str("encoder"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError("encoder", e.what());
    }
    c.model.d_model = t.positive("d_model");
    c.model.hidden = t.positive("hidden");

    const std::string profile = t.str("profile");
    const std::size_t total = t.count("total_steps");
    const std::uint64_t seed = t.u64("seed");
    if (profile == "desk") {
        c.train = TrainConfig::desk_profile(total, seed);
    } else if (profile == "bert") {
        c.train = TrainConfig::bert_profile(total, seed);
    } else {
        throw ConfigError("profile", "expected desk or bert, got '" + profile + "'");
    }
    if (t.is_set("peak_lr")) c.train.peak_lr = t.real("peak_lr");
    if (t.is_set("warmup_steps")) c.train.warmup_steps = t.count("warmup_steps");
    c.train.clip_norm = t.real("clip_norm");
    c.train.beta1 = t.real("beta1");
    c.train.beta2 = t.real("beta2");
    c.train.eps = t.real("adam_eps");
    c.train.weight_decay = t.real("weight_decay");
    c.train.validate();

    c.task.latent_dim = t.positive("latent_dim");
    c.task.d_in = t.positive("d_in");
    c.task.n_train = t.positive("n_train");
    c.task.n_corpus = t.positive("n_corpus");
    c.task.n_eval = t.count("n_eval");
    c.task.noise_std = t.real("noise_std");
    c.task.n_topics = t.count("n_topics");
    c.task.topic_spread = t.real("topic_spread");
    c.task.input_offset = t.real("input_offset");
    if (c.task.input_offset < 0.0) throw ConfigError("input_offset", "must be >= 0");
    if (c.task.noise_std < 0.0) throw ConfigError("noise_std", "must be >= 0");
    if (c.task.topic_spread < 0.0) throw ConfigError("topic_spread", "must be >= 0");
    if (c.task.n_corpus < c.task.n_train) throw ConfigError("n_corpus", "must be >= n_train");
    if (c.task.n_eval > c.task.n_corpus - c.task.n_train) {
        throw ConfigError("n_eval", "must be <= n_corpus - n_train (held-out positives come from distractors)");
    }
    if (c.strategy.n_total() > c.task.n_train) {
        throw ConfigError("n_local", "n_local * accum_steps = " + std::to_string(c.strategy.n_total()) +
                                         " exceeds n_train = " + std::to_string(c.task.n_train));
    }
    if (t.is_set("task_file")) c.task_file = t.str("task_file");
    c.export_task = t.flag("export_task");

    c.eval_every = t.count("eval_every");
    c.ks.clear();
    for (const auto& item : split_list(t.str("ks"))) {
        std::size_t k = 0;
        auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), k);
        if (ec != std::errc() || p != item.data() + item.size() || k == 0) {
            throw ConfigError("ks", "expected positive integers, got '" + item + "'");
        }
        if (k > c.task.n_corpus) throw ConfigError("ks", "cutoff " + item + " exceeds n_corpus");
        c.ks.push_back(k);
    }
    if (c.ks.empty()) throw ConfigError("ks", "needs at least one cutoff");
    c.sweep_axes = doc.sweep_axes;
    return c;
}

ExperimentConfig parse_config(const std::string& text) { return build_config(parse_document(text)); }

std::string to_text(const ExperimentConfig& c) {
    std::ostringstream o;
    auto opt = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string("none"); };
    auto b = [](bool v) { return v ? "true" : "false"; };
    o << "strategy = " << to_string(c.strategy.kind) << "\n"
      << "n_local = " << c.strategy.n_local << "\n"
      << "accum_steps = " << c.strategy.accum_steps << "\n"
      << "n_memory_q = " << c.strategy.n_memory_q << "\n"
      << "n_memory_p = " << c.strategy.n_memory_p << "\n"
      << "tau = " << fmt_real(c.strategy.tau) << "\n"
      << "use_hard_negatives = " << b(c.strategy.use_hard_negatives) << "\n"
      << "enable_bank_after_step = " << opt(c.strategy.enable_bank_after_step) << "\n"
      << "disable_query_bank_at_step = " << opt(c.strategy.disable_query_bank_at_step) << "\n"
      << "refresh_bank = " << b(c.strategy.refresh_bank) << "\n"
      << "encoder = " << to_string(c.model.kind) << "\n"
      << "d_model = " << c.model.d_model << "\n"
      << "hidden = " << c.model.hidden << "\n"
      << "peak_lr = " << fmt_real(c.train.peak_lr) << "\n"
      << "warmup_steps = " << c.train.warmup_steps << "\n"
      << "total_steps = " << c.train.total_steps << "\n"
      << "clip_norm = " << fmt_real(c.train.clip_norm) << "\n"
      << "beta1 = " << fmt_real(c.train.beta1) << "\n"
      << "beta2 = " << fmt_real(c.train.beta2) << "\n"
      << "adam_eps = " << fmt_real(c.train.eps) << "\n"
      << "weight_decay = " << fmt_real(c.train.weight_decay) << "\n"
      << "latent_dim = " << c.task.latent_dim << "\n"
      << "d_in = " << c.task.d_in << "\n"
      << "n_train = " << c.task.n_train << "\n"
      << "n_corpus = " << c.task.n_corpus << "\n"
      << "n_eval = " << c.task.n_eval << "\n"
      << "noise_std = " << fmt_real(c.task.noise_std) << "\n"
      << "n_topics = " << c.task.n_topics << "\n"
      << "topic_spread = " << fmt_real(c.task.topic_spread) << "\n"
      << "input_offset = " << fmt_real(c.task.input_offset) << "\n";
    if (c.task_file) o << "task_file = " << c.task_file->string() << "\n";
    o << "export_task = " << b(c.export_task) << "\n"
      << "eval_every = " << c.eval_every << "\n"
      << "ks = ";
    for (std::size_t i = 0; i < c.ks.size(); ++i) o << (i ? "," : "") << c.ks[i];
    o << "\n"
      << "seed = " << c.train.seed << "\n";
    for (const auto& [axis, values] : c.sweep_axes) {
        o << "sweep." << axis << " = ";
        for (std::size_t i = 0; i < values.size(); ++i) o << (i ? "," : "") << values[i];
        o << "\n";
    }
    return o.str();
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace contaccum
