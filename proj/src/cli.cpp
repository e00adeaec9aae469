/*
 * Copyright 2026 AdvBCT Toolkit Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "advbct/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "advbct/checkpoint.hpp"
#include "advbct/compat.hpp"
#include "advbct/config.hpp"
#include "advbct/data.hpp"
#include "advbct/errors.hpp"
#include "advbct/eval.hpp"
#include "advbct/rng.hpp"
#include "advbct/train.hpp"
#include "advbct/version.hpp"

namespace advbct {

namespace {

namespace fs = std::filesystem;

// Purpose ids for deriving per-stage seeds from the one user-facing seed.
// gen-data and bench share the dataset streams, so both produce the same
// synthetic data for the same --seed; the train roles use the same streams
// standalone as inside bench.
enum : std::uint64_t {
    kStreamGen = 1,
    kStreamSplit = 2,
    kStreamAlloc = 3,
    kStreamTrainOld = 4,
    kStreamTrainStar = 5,
    kStreamTrainNew = 6,
    kStreamBackfill = 7,
};

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t purpose) {
    return SeededRng(seed).fork(purpose).seed();
}

std::string default_run_dir(const std::string& command, std::uint64_t seed) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);
    return "runs/" + command + "-seed" + std::to_string(seed) + "-" + stamp;
}

fs::path prepare_run_dir(std::string& run_dir, const std::string& command,
                         std::uint64_t seed) {
    if (run_dir.empty()) run_dir = default_run_dir(command, seed);
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    if (ec) throw IoError("cannot create run directory '" + run_dir + "': " + ec.message());
    return fs::path(run_dir);
}

std::uint64_t parse_u64_str(const std::string& s, const std::string& what) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(what + ": expected an unsigned integer, got '" + s + "'");
    }
    return v;
}

std::int64_t parse_i64_str(const std::string& s, const std::string& what) {
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(what + ": expected an integer, got '" + s + "'");
    }
    return v;
}

double parse_double_str(const std::string& s, const std::string& what) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(what + ": expected a number, got '" + s + "'");
    }
    return v;
}

std::vector<std::size_t> parse_hidden(const std::string& s) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find(',', start);
        if (end == std::string::npos) end = s.size();
        const std::string item = s.substr(start, end - start);
        if (item.empty()) throw ConfigError("hidden: empty width in '" + s + "'");
        out.push_back(static_cast<std::size_t>(parse_u64_str(item, "hidden")));
        start = end + 1;
        if (end == s.size()) break;
    }
    if (out.empty()) throw ConfigError("hidden: no widths given");
    return out;
}

std::string hidden_to_string(const std::vector<std::size_t>& hidden) {
    std::string s;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        if (i > 0) s += ',';
        s += std::to_string(hidden[i]);
    }
    return s;
}

AblationFlags parse_flag_set(const std::string& s) {
    AblationFlags flags;
    flags.cls = flags.adv = flags.p2s = false;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find('+', start);
        if (end == std::string::npos) end = s.size();
        const std::string item = s.substr(start, end - start);
        if (item == "cls" && !flags.cls) {
            flags.cls = true;
        } else if (item == "adv" && !flags.adv) {
            flags.adv = true;
        } else if (item == "p2s" && !flags.p2s) {
            flags.p2s = true;
        } else {
            throw ConfigError("--ablation: bad term '" + item + "' in '" + s +
                              "' (use cls, adv, p2s joined by '+')");
        }
        start = end + 1;
        if (end == s.size()) break;
    }
    if (!flags.any()) throw ConfigError("--ablation: empty loss set");
    return flags;
}

std::string ablation_file_tag(const AblationFlags& flags) {
    std::string tag = flags.describe();
    for (char& c : tag) {
        if (c == '+') c = '_';
    }
    return tag;
}

// Shared hyperparameter block for the train and bench commands. Values mirror
// the stock recipe: 30 epochs of momentum SGD at 0.1 with cosine decay to
// zero, weight decay 5e-4, batches of 64.
struct HyperOpts {
    int epochs = 30;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t batch_size = 64;
    std::uint64_t d_emb = 16;
    std::string hidden = "64";
    double lambda = 1.0;
    double gamma0 = 1.0;
    int gamma_horizon = -1;  // resolved to epochs when negative
    double t = 0.4;
    double grl_beta = 1.0;
};

struct OptionRegistry {
    std::map<std::string, CLI::Option*> by_key;

    void track(const std::string& key, CLI::Option* opt) { by_key[key] = opt; }
};

void add_hyper_flags(CLI::App* cmd, HyperOpts& h, OptionRegistry& reg) {
    reg.track("epochs", cmd->add_option("--epochs", h.epochs, "Training epochs")
                            ->capture_default_str());
    reg.track("lr", cmd->add_option("--lr", h.lr, "Initial learning rate (cosine-decayed)")
                        ->capture_default_str());
    reg.track("momentum",
              cmd->add_option("--momentum", h.momentum, "SGD momentum")->capture_default_str());
    reg.track("weight_decay", cmd->add_option("--weight-decay", h.weight_decay, "L2 weight decay")
                                  ->capture_default_str());
    reg.track("batch_size", cmd->add_option("--batch-size", h.batch_size, "Minibatch size")
                                ->capture_default_str());
    reg.track("d_emb", cmd->add_option("--d-emb", h.d_emb, "Embedding dimension")
                           ->capture_default_str());
    reg.track("hidden",
              cmd->add_option("--hidden", h.hidden,
                              "Comma-separated hidden layer widths, e.g. 64 or 128,128")
                  ->capture_default_str());
    reg.track("lambda", cmd->add_option("--lambda", h.lambda, "Weight of the point-to-set term")
                            ->capture_default_str());
    reg.track("gamma0", cmd->add_option("--gamma0", h.gamma0,
                                        "Initial weight of the adversarial term")
                            ->capture_default_str());
    reg.track("gamma_horizon",
              cmd->add_option("--gamma-horizon", h.gamma_horizon,
                              "Epochs over which the adversarial weight decays linearly to "
                              "zero (defaults to --epochs)"));
    reg.track("t", cmd->add_option("--t", h.t, "Elastic boundary threshold")
                       ->capture_default_str());
    reg.track("grl_beta", cmd->add_option("--grl-beta", h.grl_beta,
                                          "Gradient reversal coefficient")
                              ->capture_default_str());
}

// Applies config-file keys that were not overridden on the command line.
// Unknown keys are hard errors so typos cannot silently skew a benchmark.
void merge_config_file(const std::string& path,
                       const std::map<std::string, std::function<void(const std::string&)>>&
                           setters,
                       const OptionRegistry& reg) {
    const auto file_values = parse_config_file(path);
    for (const auto& [key, value] : file_values) {
        const auto setter = setters.find(key);
        if (setter == setters.end()) {
            throw ConfigError(path + ": unknown config key '" + key + "'");
        }
        const auto opt = reg.by_key.find(key);
        if (opt != reg.by_key.end() && opt->second != nullptr && opt->second->count() > 0) {
            continue;  // explicit flag wins
        }
        setter->second(value);
    }
}

std::map<std::string, std::function<void(const std::string&)>> hyper_setters(HyperOpts& h) {
    return {
        {"epochs", [&h](const std::string& v) {
             h.epochs = static_cast<int>(parse_i64_str(v, "epochs"));
         }},
        {"lr", [&h](const std::string& v) { h.lr = parse_double_str(v, "lr"); }},
        {"momentum",
         [&h](const std::string& v) { h.momentum = parse_double_str(v, "momentum"); }},
        {"weight_decay",
         [&h](const std::string& v) { h.weight_decay = parse_double_str(v, "weight_decay"); }},
        {"batch_size",
         [&h](const std::string& v) { h.batch_size = parse_u64_str(v, "batch_size"); }},
        {"d_emb", [&h](const std::string& v) { h.d_emb = parse_u64_str(v, "d_emb"); }},
        {"hidden", [&h](const std::string& v) { h.hidden = v; }},
        {"lambda", [&h](const std::string& v) { h.lambda = parse_double_str(v, "lambda"); }},
        {"gamma0", [&h](const std::string& v) { h.gamma0 = parse_double_str(v, "gamma0"); }},
        {"gamma_horizon",
         [&h](const std::string& v) {
             h.gamma_horizon = static_cast<int>(parse_i64_str(v, "gamma_horizon"));
         }},
        {"t", [&h](const std::string& v) { h.t = parse_double_str(v, "t"); }},
        {"grl_beta",
         [&h](const std::string& v) { h.grl_beta = parse_double_str(v, "grl_beta"); }},
    };
}

TrainConfig to_train_config(const HyperOpts& h, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = h.epochs;
    cfg.lr = h.lr;
    cfg.momentum = h.momentum;
    cfg.weight_decay = h.weight_decay;
    cfg.batch_size = static_cast<std::size_t>(h.batch_size);
    cfg.seed = seed;
    cfg.hidden = parse_hidden(h.hidden);
    cfg.d_emb = static_cast<std::size_t>(h.d_emb);
    return cfg;
}

CompatLossConfig to_compat_config(const HyperOpts& h) {
    CompatLossConfig ccfg;
    ccfg.lambda = h.lambda;
    ccfg.gamma0 = h.gamma0;
    ccfg.gamma_horizon = h.gamma_horizon < 0 ? h.epochs : h.gamma_horizon;
    ccfg.t = h.t;
    ccfg.grl_beta = h.grl_beta;
    return ccfg;
}

void put_hyper_settings(std::map<std::string, std::string>& settings, const HyperOpts& h,
                        int resolved_horizon) {
    settings["epochs"] = std::to_string(h.epochs);
    settings["lr"] = format_double(h.lr);
    settings["momentum"] = format_double(h.momentum);
    settings["weight_decay"] = format_double(h.weight_decay);
    settings["batch_size"] = std::to_string(h.batch_size);
    settings["d_emb"] = std::to_string(h.d_emb);
    settings["hidden"] = hidden_to_string(parse_hidden(h.hidden));
    settings["lambda"] = format_double(h.lambda);
    settings["gamma0"] = format_double(h.gamma0);
    settings["gamma_horizon"] = std::to_string(resolved_horizon);
    settings["t"] = format_double(h.t);
    settings["grl_beta"] = format_double(h.grl_beta);
}

void add_input(RunManifest& manifest, const std::string& path) {
    manifest.inputs.emplace_back(path, file_digest_hex(path));
}

double round2(double percent) { return std::round(percent * 100.0) / 100.0; }

nlohmann::ordered_json report_to_json(const RetrievalReport& report) {
    nlohmann::ordered_json doc;
    doc["beta"] = report.beta;
    nlohmann::ordered_json sets = nlohmann::ordered_json::array();
    for (const TestSetMaps& s : report.sets) {
        sets.push_back({{"name", s.name},
                        {"self_old", s.self_old},
                        {"self_new", s.self_new},
                        {"self_star", s.self_star},
                        {"cross", s.cross}});
    }
    doc["sets"] = sets;
    doc["p_up"] = round2(report.p_up);
    doc["p_comp"] = round2(report.p_comp);
    doc["p_beta_score"] = round2(report.p_beta_score);
    return doc;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

void write_report_json(const fs::path& path, const RetrievalReport& report) {
    write_text_file(path, report_to_json(report).dump(2) + "\n");
}

std::string format_report_block(const std::string& title, const RetrievalReport& report) {
    std::ostringstream out;
    char buf[256];
    out << title << "\n";
    for (const TestSetMaps& s : report.sets) {
        std::snprintf(buf, sizeof(buf),
                      "  [%s] self_old %.4f | self_new %.4f | self_star %.4f | cross %.4f\n",
                      s.name.c_str(), s.self_old, s.self_new, s.self_star, s.cross);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "  p_up %.2f | p_comp %.2f | p_beta_score %.2f (beta %g)\n",
                  round2(report.p_up), round2(report.p_comp), round2(report.p_beta_score),
                  report.beta);
    out << buf;
    return out.str();
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOpts {
    std::uint64_t classes = 20;
    std::uint64_t per_class = 100;
    std::uint64_t dim = 32;
    double spread = 0.15;
    std::uint64_t queries_per_class = 5;
    std::uint64_t seed = kDefaultSeed;
    std::string run_dir;
};

void cmd_gen_data(GenDataOpts& o) {
    const fs::path dir = prepare_run_dir(o.run_dir, "gen-data", o.seed);
    const LabeledDataset full =
        gen_synthetic(static_cast<int>(o.classes), static_cast<int>(o.per_class),
                      static_cast<int>(o.dim), o.spread, sub_seed(o.seed, kStreamGen));
    const EvalSplit split = split_eval(full, static_cast<int>(o.queries_per_class),
                                       sub_seed(o.seed, kStreamSplit));
    write_csv((dir / "train.csv").string(), split.gallery);
    write_csv((dir / "gallery.csv").string(), split.gallery);
    write_csv((dir / "query.csv").string(), split.query);

    RunManifest manifest;
    manifest.command = "gen-data";
    manifest.seed = o.seed;
    manifest.settings = {
        {"classes", std::to_string(o.classes)},
        {"per_class", std::to_string(o.per_class)},
        {"dim", std::to_string(o.dim)},
        {"spread", format_double(o.spread)},
        {"queries_per_class", std::to_string(o.queries_per_class)},
    };
    write_manifest((dir / "manifest.json").string(), manifest);

    std::cout << "gen-data: " << split.gallery.size() << " train/gallery rows, "
              << split.query.size() << " query rows, " << full.class_count << " classes -> "
              << dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainCmdOpts {
    std::string role;
    std::string method = "advbct";
    bool no_adv = false;
    bool no_p2s = false;
    std::string config_path;
    std::string train_path;
    std::string old_checkpoint;
    std::string geometry_path;
    std::uint64_t seed = kDefaultSeed;
    std::string run_dir;
    HyperOpts hyper;
};

void cmd_train(TrainCmdOpts& o, const OptionRegistry& reg) {
    if (!o.config_path.empty()) {
        merge_config_file(o.config_path, hyper_setters(o.hyper), reg);
    }
    AblationFlags flags;
    if (o.role == "new") {
        if (o.old_checkpoint.empty()) {
            throw ConfigError("--role new requires --old-checkpoint");
        }
        if (o.method == "baseline") {
            flags.cls = true;
            flags.adv = false;
            flags.p2s = false;
        } else {
            flags.cls = true;
            flags.adv = !o.no_adv;
            flags.p2s = !o.no_p2s;
        }
        if (flags.p2s && o.geometry_path.empty()) {
            throw ConfigError("--geometry is required when the point-to-set term is enabled");
        }
    }

    const fs::path dir = prepare_run_dir(o.run_dir, "train-" + o.role, o.seed);
    const LabeledDataset train = read_csv(o.train_path);
    // Each role trains on its own stream, as inside cmd_bench: the old and
    // independent models of one pipeline share a --seed yet stay distinct.
    const std::uint64_t role_stream = o.role == "old"           ? kStreamTrainOld
                                      : o.role == "independent" ? kStreamTrainStar
                                                                : kStreamTrainNew;
    const TrainConfig cfg = [&] {
        TrainConfig c = to_train_config(o.hyper, sub_seed(o.seed, role_stream));
        c.flags = flags;
        return c;
    }();
    const CompatLossConfig ccfg = to_compat_config(o.hyper);

    RunManifest manifest;
    manifest.command = "train";
    manifest.seed = o.seed;
    put_hyper_settings(manifest.settings, o.hyper, ccfg.gamma_horizon);
    manifest.settings["role"] = o.role;
    add_input(manifest, o.train_path);
    if (!o.config_path.empty()) add_input(manifest, o.config_path);

    double accuracy = 0.0;
    if (o.role == "new") {
        manifest.settings["method"] = o.method;
        manifest.settings["loss_terms"] = flags.describe();
        const ModelCheckpoint old_ckpt = load_checkpoint(o.old_checkpoint);
        add_input(manifest, o.old_checkpoint);
        std::vector<ClassGeometry> geometry;
        if (flags.p2s) {
            geometry = load_geometry(o.geometry_path);
            add_input(manifest, o.geometry_path);
        }
        TrainNewResult res = train_new_compatible(train, old_ckpt.embed, geometry, cfg, ccfg);
        ModelCheckpoint out;
        out.embed = res.model;
        out.classifier = res.classifier;
        out.discriminator = res.discriminator;
        out.has_discriminator = flags.adv;
        save_checkpoint((dir / "checkpoint.bin").string(), out);
        write_curve_csv((dir / "loss_curve.csv").string(), res.curve);
        accuracy = res.train_accuracy;
    } else {
        TrainOldResult res = train_old(train, cfg);
        ModelCheckpoint out;
        out.embed = res.model;
        out.classifier = res.classifier;
        save_checkpoint((dir / "checkpoint.bin").string(), out);
        write_curve_csv((dir / "loss_curve.csv").string(), res.curve);
        if (o.role == "old") {
            const std::vector<ClassGeometry> geometry =
                compute_class_geometry(embed_dataset(res.model, train), train.labels);
            save_geometry((dir / "geometry.bin").string(), geometry);
        }
        accuracy = res.train_accuracy;
    }
    write_manifest((dir / "manifest.json").string(), manifest);

    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.4f", accuracy);
    std::cout << "train (" << o.role << "): final train accuracy " << buf << " -> "
              << dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalCmdOpts {
    std::string old_path;
    std::string new_path;
    std::string star_path;
    std::string query_path;
    std::string gallery_path;
    double beta = 1.0;
    std::uint64_t seed = kDefaultSeed;
    std::string run_dir;
};

void cmd_eval(EvalCmdOpts& o) {
    const ModelCheckpoint old_ckpt = load_checkpoint(o.old_path);
    const ModelCheckpoint new_ckpt = load_checkpoint(o.new_path);
    const ModelCheckpoint star_ckpt = load_checkpoint(o.star_path);
    if (old_ckpt.embed.emb_dim() != new_ckpt.embed.emb_dim() ||
        old_ckpt.embed.emb_dim() != star_ckpt.embed.emb_dim()) {
        throw ShapeError("checkpoints disagree on the embedding dimension");
    }
    const LabeledDataset query = read_csv(o.query_path);
    const LabeledDataset gallery = read_csv(o.gallery_path);

    TestSetMaps maps;
    maps.name = "default";
    maps.self_old = self_test(old_ckpt.embed, query, gallery).value;
    maps.self_new = self_test(new_ckpt.embed, query, gallery).value;
    maps.self_star = self_test(star_ckpt.embed, query, gallery).value;
    maps.cross = cross_test(new_ckpt.embed, old_ckpt.embed, query, gallery).value;
    const RetrievalReport report = aggregate_report({maps}, o.beta);

    const fs::path dir = prepare_run_dir(o.run_dir, "eval", o.seed);
    write_report_json(dir / "report.json", report);

    RunManifest manifest;
    manifest.command = "eval";
    manifest.seed = o.seed;
    manifest.settings = {{"beta", format_double(o.beta)}};
    add_input(manifest, o.old_path);
    add_input(manifest, o.new_path);
    add_input(manifest, o.star_path);
    add_input(manifest, o.query_path);
    add_input(manifest, o.gallery_path);
    write_manifest((dir / "manifest.json").string(), manifest);

    std::cout << format_report_block("eval -> " + dir.string(), report);
}

// ---------------------------------------------------------------------------
// backfill

struct BackfillCmdOpts {
    std::string old_path;
    std::string new_path;
    std::string query_path;
    std::string gallery_path;
    std::uint64_t steps = 11;
    std::uint64_t seed = kDefaultSeed;
    std::string run_dir;
};

void cmd_backfill(BackfillCmdOpts& o) {
    if (o.steps < 2) throw ConfigError("--steps must be at least 2");
    const ModelCheckpoint old_ckpt = load_checkpoint(o.old_path);
    const ModelCheckpoint new_ckpt = load_checkpoint(o.new_path);
    const LabeledDataset query = read_csv(o.query_path);
    const LabeledDataset gallery = read_csv(o.gallery_path);

    std::vector<double> fractions(o.steps);
    for (std::size_t i = 0; i < o.steps; ++i) {
        fractions[i] = static_cast<double>(i) / static_cast<double>(o.steps - 1);
    }
    const BackfillCurve curve =
        backfill_curve(old_ckpt.embed, new_ckpt.embed, query, gallery, fractions,
                       sub_seed(o.seed, kStreamBackfill));

    const fs::path dir = prepare_run_dir(o.run_dir, "backfill", o.seed);
    write_backfill_csv((dir / "backfill.csv").string(), curve);

    RunManifest manifest;
    manifest.command = "backfill";
    manifest.seed = o.seed;
    manifest.settings = {{"steps", std::to_string(o.steps)}};
    add_input(manifest, o.old_path);
    add_input(manifest, o.new_path);
    add_input(manifest, o.query_path);
    add_input(manifest, o.gallery_path);
    write_manifest((dir / "manifest.json").string(), manifest);

    char buf[160];
    std::snprintf(buf, sizeof(buf), "backfill: map %.4f at rho=0 -> %.4f at rho=1 (%zu steps)",
                  curve.front().map, curve.back().map, curve.size());
    std::cout << buf << " -> " << dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// bench

struct BenchCmdOpts {
    std::string allocation = "extended-data";
    double fraction = 0.3;
    std::uint64_t classes = 20;
    std::uint64_t per_class = 100;
    std::uint64_t dim = 32;
    double spread = 0.15;
    std::uint64_t queries_per_class = 5;
    double beta = 1.0;
    std::vector<std::string> ablations;
    std::string config_path;
    std::uint64_t seed = kDefaultSeed;
    std::string run_dir;
    HyperOpts hyper;
};

struct BenchMethodRow {
    std::string label;
    RetrievalReport report;
};

void cmd_bench(BenchCmdOpts& o, const OptionRegistry& reg) {
    if (!o.config_path.empty()) {
        auto setters = hyper_setters(o.hyper);
        setters.emplace("allocation", [&o](const std::string& v) { o.allocation = v; });
        setters.emplace("fraction", [&o](const std::string& v) {
            o.fraction = parse_double_str(v, "fraction");
        });
        setters.emplace("classes", [&o](const std::string& v) {
            o.classes = parse_u64_str(v, "classes");
        });
        setters.emplace("per_class", [&o](const std::string& v) {
            o.per_class = parse_u64_str(v, "per_class");
        });
        setters.emplace("dim", [&o](const std::string& v) { o.dim = parse_u64_str(v, "dim"); });
        setters.emplace("spread", [&o](const std::string& v) {
            o.spread = parse_double_str(v, "spread");
        });
        setters.emplace("queries_per_class", [&o](const std::string& v) {
            o.queries_per_class = parse_u64_str(v, "queries_per_class");
        });
        setters.emplace("beta", [&o](const std::string& v) {
            o.beta = parse_double_str(v, "beta");
        });
        merge_config_file(o.config_path, setters, reg);
    }
    const AllocationKind kind = allocation_kind_from_string(o.allocation);
    const fs::path dir = prepare_run_dir(o.run_dir, "bench", o.seed);

    // Dataset: identical streams to gen-data, so the benchmark runs on the
    // same synthetic corpus a user would get from the standalone command.
    const LabeledDataset full =
        gen_synthetic(static_cast<int>(o.classes), static_cast<int>(o.per_class),
                      static_cast<int>(o.dim), o.spread, sub_seed(o.seed, kStreamGen));
    const EvalSplit split = split_eval(full, static_cast<int>(o.queries_per_class),
                                       sub_seed(o.seed, kStreamSplit));
    write_csv((dir / "gallery.csv").string(), split.gallery);
    write_csv((dir / "query.csv").string(), split.query);

    AllocationSpec alloc_spec;
    alloc_spec.kind = kind;
    alloc_spec.fraction = o.fraction;
    alloc_spec.seed = sub_seed(o.seed, kStreamAlloc);
    const AllocationResult alloc = allocate(split.gallery, alloc_spec);
    write_csv((dir / "old_train.csv").string(), alloc.old_train);
    write_csv((dir / "new_train.csv").string(), alloc.new_train);

    // Old model: stock narrow backbone on the old slice.
    const TrainConfig old_cfg = to_train_config(o.hyper, sub_seed(o.seed, kStreamTrainOld));
    const TrainOldResult old_run = train_old(alloc.old_train, old_cfg);
    {
        ModelCheckpoint ckpt;
        ckpt.embed = old_run.model;
        ckpt.classifier = old_run.classifier;
        save_checkpoint((dir / "checkpoint_old.bin").string(), ckpt);
    }
    write_curve_csv((dir / "loss_curve_old.csv").string(), old_run.curve);

    // Class geometry is keyed by the original class ids so the compatible
    // trainings (whose labels are the original ids) can look their classes up.
    std::vector<int> orig_labels(alloc.old_train.size());
    for (std::size_t i = 0; i < orig_labels.size(); ++i) {
        orig_labels[i] = alloc.old_to_orig[static_cast<std::size_t>(
            alloc.old_train.labels[i])];
    }
    const std::vector<ClassGeometry> geometry = compute_class_geometry(
        embed_dataset(old_run.model, alloc.old_train), orig_labels);
    save_geometry((dir / "geometry.bin").string(), geometry);

    // New models use the wider backbone on the enlarged-backbone benchmarks.
    const std::vector<std::size_t> new_hidden =
        enlarged_backbone(kind) ? std::vector<std::size_t>{128, 128} : parse_hidden(o.hyper.hidden);
    const CompatLossConfig ccfg = to_compat_config(o.hyper);

    // Independent reference: same architecture and data as the new model, no
    // compatibility terms.
    TrainConfig star_cfg = to_train_config(o.hyper, sub_seed(o.seed, kStreamTrainStar));
    star_cfg.hidden = new_hidden;
    const TrainOldResult star_run = train_old(alloc.new_train, star_cfg);
    {
        ModelCheckpoint ckpt;
        ckpt.embed = star_run.model;
        ckpt.classifier = star_run.classifier;
        save_checkpoint((dir / "checkpoint_baseline.bin").string(), ckpt);
    }
    write_curve_csv((dir / "loss_curve_baseline.csv").string(), star_run.curve);

    struct NewRun {
        std::string label;
        TrainNewResult result;
    };
    std::vector<NewRun> new_runs;
    {
        TrainConfig cfg = to_train_config(o.hyper, sub_seed(o.seed, kStreamTrainNew));
        cfg.hidden = new_hidden;
        cfg.flags = AblationFlags{};  // all three terms
        new_runs.push_back({"advbct",
                            train_new_compatible(alloc.new_train, old_run.model, geometry, cfg,
                                                 ccfg)});
    }
    // Ablations reuse the advbct seed: initialization and batch order are
    // identical across rows, so differences isolate the enabled loss terms.
    for (std::size_t i = 0; i < o.ablations.size(); ++i) {
        const AblationFlags flags = parse_flag_set(o.ablations[i]);
        TrainConfig cfg = to_train_config(o.hyper, sub_seed(o.seed, kStreamTrainNew));
        cfg.hidden = new_hidden;
        cfg.flags = flags;
        new_runs.push_back({ablation_file_tag(flags),
                            train_new_compatible(alloc.new_train, old_run.model, geometry, cfg,
                                                 ccfg)});
    }
    for (const NewRun& run : new_runs) {
        ModelCheckpoint ckpt;
        ckpt.embed = run.result.model;
        ckpt.classifier = run.result.classifier;
        ckpt.discriminator = run.result.discriminator;
        ckpt.has_discriminator = !run.result.discriminator.l1.w.values.empty();
        save_checkpoint((dir / ("checkpoint_" + run.label + ".bin")).string(), ckpt);
        write_curve_csv((dir / ("loss_curve_" + run.label + ".csv")).string(),
                        run.result.curve);
    }

    // Retrieval scores. Every row shares self_old and self_star; self_new and
    // cross are per method.
    const DenseMatrix q_old = embed_dataset(old_run.model, split.query);
    const DenseMatrix g_old = embed_dataset(old_run.model, split.gallery);
    const DenseMatrix q_star = embed_dataset(star_run.model, split.query);
    const DenseMatrix g_star = embed_dataset(star_run.model, split.gallery);
    const double self_old = mean_average_precision(q_old, split.query.labels, g_old,
                                                   split.gallery.labels).value;
    const double self_star = mean_average_precision(q_star, split.query.labels, g_star,
                                                    split.gallery.labels).value;

    std::vector<BenchMethodRow> rows;
    {
        TestSetMaps maps;
        maps.name = "synthetic";
        maps.self_old = self_old;
        maps.self_star = self_star;
        maps.self_new = self_star;
        maps.cross = mean_average_precision(q_star, split.query.labels, g_old,
                                            split.gallery.labels).value;
        rows.push_back({"baseline", aggregate_report({maps}, o.beta)});
    }
    for (const NewRun& run : new_runs) {
        const DenseMatrix q_new = embed_dataset(run.result.model, split.query);
        const DenseMatrix g_new = embed_dataset(run.result.model, split.gallery);
        TestSetMaps maps;
        maps.name = "synthetic";
        maps.self_old = self_old;
        maps.self_star = self_star;
        maps.self_new = mean_average_precision(q_new, split.query.labels, g_new,
                                               split.gallery.labels).value;
        maps.cross = mean_average_precision(q_new, split.query.labels, g_old,
                                            split.gallery.labels).value;
        rows.push_back({run.label, aggregate_report({maps}, o.beta)});
    }
    for (const BenchMethodRow& row : rows) {
        write_report_json(dir / ("report_" + row.label + ".json"), row.report);
    }

    // Summary table: one row per method over the shared test set.
    std::ostringstream summary;
    summary << "benchmark: allocation " << to_string(kind) << ", classes " << o.classes
            << ", per-class " << o.per_class << ", fraction " << format_double(o.fraction)
            << ", seed " << o.seed << "\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-14s %9s %9s %9s %9s %8s %8s %8s\n", "method",
                  "self_old", "cross", "self_new", "self_star", "p_up", "p_comp", "p_beta");
    summary << buf;
    for (const BenchMethodRow& row : rows) {
        const TestSetMaps& s = row.report.sets.front();
        std::snprintf(buf, sizeof(buf), "%-14s %9.4f %9.4f %9.4f %9.4f %8.2f %8.2f %8.2f\n",
                      row.label.c_str(), s.self_old, s.cross, s.self_new, s.self_star,
                      round2(row.report.p_up), round2(row.report.p_comp),
                      round2(row.report.p_beta_score));
        summary << buf;
    }
    write_text_file(dir / "summary.txt", summary.str());
    std::cout << summary.str() << "-> " << dir.string() << "\n";

    RunManifest manifest;
    manifest.command = "bench";
    manifest.seed = o.seed;
    put_hyper_settings(manifest.settings, o.hyper, ccfg.gamma_horizon);
    manifest.settings["allocation"] = to_string(kind);
    manifest.settings["fraction"] = format_double(o.fraction);
    manifest.settings["classes"] = std::to_string(o.classes);
    manifest.settings["per_class"] = std::to_string(o.per_class);
    manifest.settings["dim"] = std::to_string(o.dim);
    manifest.settings["spread"] = format_double(o.spread);
    manifest.settings["queries_per_class"] = std::to_string(o.queries_per_class);
    manifest.settings["beta"] = format_double(o.beta);
    if (!o.ablations.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < o.ablations.size(); ++i) {
            if (i > 0) joined += ' ';
            joined += o.ablations[i];
        }
        manifest.settings["ablations"] = joined;
    }
    if (!o.config_path.empty()) add_input(manifest, o.config_path);
    write_manifest((dir / "manifest.json").string(), manifest);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Backward-compatible embedding training toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("advbct ") + kVersion);

    GenDataOpts gen_opts;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic retrieval dataset");
    gen->add_option("--classes", gen_opts.classes, "Number of classes")->capture_default_str();
    gen->add_option("--per-class", gen_opts.per_class, "Samples per class")
        ->capture_default_str();
    gen->add_option("--dim", gen_opts.dim, "Raw feature dimension")->capture_default_str();
    gen->add_option("--spread", gen_opts.spread, "Class cloud width")->capture_default_str();
    gen->add_option("--queries-per-class", gen_opts.queries_per_class,
                    "Held-out queries per class")
        ->capture_default_str();
    gen->add_option("--seed", gen_opts.seed, "Random seed")->capture_default_str();
    gen->add_option("--run-dir", gen_opts.run_dir, "Output directory (default: generated)");

    TrainCmdOpts train_opts;
    OptionRegistry train_reg;
    CLI::App* train = app.add_subcommand("train", "Train an embedding model");
    train->add_option("--role", train_opts.role, "Which model this run produces")
        ->required()
        ->check(CLI::IsMember({"old", "new", "independent"}));
    train->add_option("--method", train_opts.method, "Training method for role new")
        ->check(CLI::IsMember({"advbct", "baseline"}))
        ->capture_default_str();
    train->add_flag("--no-adv", train_opts.no_adv, "Disable the adversarial term");
    train->add_flag("--no-p2s", train_opts.no_p2s, "Disable the point-to-set term");
    train->add_option("--config", train_opts.config_path, "key = value config file");
    train->add_option("--train-csv", train_opts.train_path, "Training dataset CSV")->required();
    train->add_option("--old-checkpoint", train_opts.old_checkpoint,
                      "Frozen old model (required for role new)");
    train->add_option("--geometry", train_opts.geometry_path,
                      "Class geometry file from the old training");
    train->add_option("--seed", train_opts.seed, "Random seed")->capture_default_str();
    train->add_option("--run-dir", train_opts.run_dir, "Output directory (default: generated)");
    add_hyper_flags(train, train_opts.hyper, train_reg);

    EvalCmdOpts eval_opts;
    CLI::App* eval = app.add_subcommand("eval", "Score checkpoints on a query/gallery split");
    eval->add_option("--old", eval_opts.old_path, "Old model checkpoint")->required();
    eval->add_option("--new", eval_opts.new_path, "New model checkpoint")->required();
    eval->add_option("--star", eval_opts.star_path, "Independent reference checkpoint")
        ->required();
    eval->add_option("--query", eval_opts.query_path, "Query CSV")->required();
    eval->add_option("--gallery", eval_opts.gallery_path, "Gallery CSV")->required();
    eval->add_option("--beta", eval_opts.beta, "Weight on the update gain in the combined score")
        ->capture_default_str();
    eval->add_option("--seed", eval_opts.seed, "Seed recorded in the manifest")
        ->capture_default_str();
    eval->add_option("--run-dir", eval_opts.run_dir, "Output directory (default: generated)");

    BackfillCmdOpts backfill_opts;
    CLI::App* backfill =
        app.add_subcommand("backfill", "Trace retrieval quality across a gallery refresh");
    backfill->add_option("--old", backfill_opts.old_path, "Old model checkpoint")->required();
    backfill->add_option("--new", backfill_opts.new_path, "New model checkpoint")->required();
    backfill->add_option("--query", backfill_opts.query_path, "Query CSV")->required();
    backfill->add_option("--gallery", backfill_opts.gallery_path, "Gallery CSV")->required();
    backfill->add_option("--steps", backfill_opts.steps, "Number of refresh fractions (>= 2)")
        ->capture_default_str();
    backfill->add_option("--seed", backfill_opts.seed, "Random seed for the refresh order")
        ->capture_default_str();
    backfill->add_option("--run-dir", backfill_opts.run_dir,
                         "Output directory (default: generated)");

    BenchCmdOpts bench_opts;
    OptionRegistry bench_reg;
    CLI::App* bench =
        app.add_subcommand("bench", "End-to-end benchmark: allocate, train, evaluate");
    bench->add_option("--allocation", bench_opts.allocation,
                      "extended-data | extended-class | enlarged-backbone-data | "
                      "enlarged-backbone-class")
        ->capture_default_str();
    bench->add_option("--fraction", bench_opts.fraction, "Old training fraction")
        ->capture_default_str();
    bench->add_option("--classes", bench_opts.classes, "Number of classes")
        ->capture_default_str();
    bench->add_option("--per-class", bench_opts.per_class, "Samples per class")
        ->capture_default_str();
    bench->add_option("--dim", bench_opts.dim, "Raw feature dimension")->capture_default_str();
    bench->add_option("--spread", bench_opts.spread, "Class cloud width")->capture_default_str();
    bench->add_option("--queries-per-class", bench_opts.queries_per_class,
                      "Held-out queries per class")
        ->capture_default_str();
    bench->add_option("--beta", bench_opts.beta,
                      "Weight on the update gain in the combined score")
        ->capture_default_str();
    bench->add_option("--ablation", bench_opts.ablations,
                      "Extra loss-term set to train, e.g. cls or cls+p2s (repeatable)");
    bench->add_option("--config", bench_opts.config_path, "key = value config file");
    bench->add_option("--seed", bench_opts.seed, "Random seed")->capture_default_str();
    bench->add_option("--run-dir", bench_opts.run_dir, "Output directory (default: generated)");
    add_hyper_flags(bench, bench_opts.hyper, bench_reg);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) cmd_gen_data(gen_opts);
        if (train->parsed()) cmd_train(train_opts, train_reg);
        if (eval->parsed()) cmd_eval(eval_opts);
        if (backfill->parsed()) cmd_backfill(backfill_opts);
        if (bench->parsed()) cmd_bench(bench_opts, bench_reg);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.push_back("advbct");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const std::string& s : full) argv.push_back(s.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace advbct
