// SPDX-License-Identifier: Apache-2.0
//
// adds: plan / train / eval / gradcheck / bench.
// Exit codes: 0 ok, 1 validation or check failure, 2 usage error.

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "adds/decoder/grad_suite.hpp"
#include "adds/errors.hpp"
#include "adds/train/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace adds;

namespace {

constexpr const char* kTool = "adds";
constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string shortest(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

fs::path default_out() {
    if (const char* env = std::getenv("ADDS_OUTPUT_DIR"); env && *env) return env;
    return "adds_out";
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw UsageError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write " + p.string());
    out << text;
}

json config_json(const train::TrainConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : train::parse_key_values(cfg.to_text())) j[k] = v;
    return j;
}

train::TrainConfig config_from_json(const json& j) {
    train::TrainConfig cfg;
    for (const auto& [k, v] : j.items()) cfg.set(k, v.get<std::string>());
    return cfg;
}

void write_manifest(const fs::path& dir, const std::string& sub, const train::TrainConfig& cfg, json options,
                    json artifacts) {
    json m;
    m["tool"] = kTool;
    m["version"] = kVersion;
    m["subcommand"] = sub;
    m["config"] = config_json(cfg);
    m["seeds"] = {{"seed", cfg.seed}};
    m["options"] = std::move(options);
    m["artifacts"] = std::move(artifacts);
    write_file(dir / "manifest.json", m.dump(2) + "\n");
}

json load_manifest(const fs::path& p, const std::string& sub) {
    json m;
    try {
        m = json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw FormatError("manifest " + p.string() + ": " + e.what());
    }
    if (m.value("tool", "") != kTool || m.value("subcommand", "") != sub)
        throw FormatError("manifest " + p.string() + " is not an '" + sub + "' manifest");
    return m;
}

// ---------------------------------------------------------------- plan

struct PlanArgs {
    std::size_t base = 0, target = 0;
    std::string levels;
    bool cls_only = false;
    std::string format = "text";
};

json plan_record(const pyramid::PyramidPlan& plan, const pyramid::CostReport& cost) {
    json j;
    j["base_size"] = plan.base_size;
    j["target_size"] = plan.target_side;
    j["levels"] = json::array();
    for (const auto& l : plan.levels) {
        j["levels"].push_back({{"level", l.index},
                               {"resized", l.resized_side},
                               {"grid", l.grid},
                               {"tiles", l.tiles.size()},
                               {"stride", l.stride},
                               {"overlap", l.overlap_px},
                               {"cls_only", l.cls_only}});
    }
    j["selected"] = plan.selected;
    j["tiles"] = plan.selected_tile_count();
    j["pyramid_units"] = cost.pyramid_units;
    j["naive_units"] = cost.naive_units;
    j["ratio"] = cost.ratio;
    return j;
}

int cmd_plan(const PlanArgs& a) {
    std::optional<std::vector<std::size_t>> sel;
    if (!a.levels.empty() && a.levels != "all") sel = pyramid::parse_levels(a.levels);
    const auto plan = pyramid::build_plan(a.base, a.target, sel, a.cls_only);
    const auto cost = pyramid::cost_report(plan);
    if (a.format == "record") {
        std::cout << plan_record(plan, cost).dump() << "\n";
        return 0;
    }
    std::cout << "base " << plan.base_size << "  target " << plan.target_side << "  scale " << shortest(plan.scale)
              << "\n";
    std::cout << "level  resized  grid  tiles  stride  overlap  tokens\n";
    for (const auto& l : plan.levels) {
        const bool used = std::find(plan.selected.begin(), plan.selected.end(), l.index) != plan.selected.end();
        std::cout << std::setw(5) << l.index << std::setw(9) << l.resized_side << std::setw(6) << l.grid
                  << std::setw(7) << l.tiles.size() << std::setw(8) << l.stride << std::setw(9) << l.overlap_px
                  << "  " << (used ? (l.cls_only ? "cls" : "all") : "-") << "\n";
    }
    std::cout << "levels " << plan.levels.size() << "  tiles " << plan.selected_tile_count() << "\n";
    std::cout << "cost: pyramid " << cost.pyramid_units << " units, naive " << cost.naive_units
              << " units, ratio " << std::fixed << std::setprecision(2) << cost.ratio << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config, out, manifest, resume, format = "text";
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
    std::optional<std::size_t> epochs, stop_after;
    std::vector<std::string> sets;
};

void apply_override(train::TrainConfig& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
}

std::string loss_log(const train::TrainState& s) {
    std::string out = "epoch=0 loss=" + shortest(s.initial_loss) + "\n";
    for (std::size_t e = 0; e < s.epoch_loss.size(); ++e)
        out += "epoch=" + std::to_string(e + 1) + " loss=" + shortest(s.epoch_loss[e]) + "\n";
    return out;
}

int cmd_train(TrainArgs a) {
    train::TrainConfig cfg;
    if (!a.manifest.empty()) {
        const json m = load_manifest(a.manifest, "train");
        cfg = config_from_json(m.at("config"));
        const json& opt = m.at("options");
        if (opt.contains("stop_after") && !a.stop_after) a.stop_after = opt["stop_after"].get<std::size_t>();
        if (opt.contains("resume") && a.resume.empty()) a.resume = opt["resume"].get<std::string>();
    } else if (!a.resume.empty()) {
        cfg = train::TrainConfig::parse(train::load_checkpoint(a.resume).config_text);
    } else if (!a.config.empty()) {
        cfg = train::TrainConfig::parse(read_file(a.config));
    }
    const bool fixed = !a.manifest.empty() || !a.resume.empty();
    if (fixed && (a.seed || a.lr || a.epochs || !a.sets.empty() || !a.config.empty()))
        throw UsageError("config flags cannot be combined with --manifest or --resume");
    for (const auto& kv : a.sets) apply_override(cfg, kv);
    if (a.seed) cfg.seed = *a.seed;
    if (a.lr) cfg.lr = *a.lr;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (cfg.timestamp.empty()) cfg.timestamp = train::utc_timestamp();
    cfg.validate();

    const fs::path dir = a.out.empty() ? default_out() : fs::path(a.out);
    fs::create_directories(dir);

    const train::Experiment exp(cfg);
    train::TrainState state = a.resume.empty() ? train::initial_state(exp)
                                               : train::from_checkpoint(exp, train::load_checkpoint(a.resume));
    const bool text = a.format == "text";
    if (text) std::cout << "epoch 0  loss " << shortest(state.initial_loss) << "\n";
    train::train(exp, state, a.stop_after, [&](const train::TrainState& s) {
        if (text) std::cout << "epoch " << s.epochs_done << "  loss " << shortest(s.epoch_loss.back()) << "\n";
    });

    const fs::path ckpt = dir / "model.ckpt", log = dir / "loss.log";
    train::save_checkpoint(train::to_checkpoint(exp, state), ckpt);
    write_file(log, loss_log(state));
    json opts = json::object();
    if (a.stop_after) opts["stop_after"] = *a.stop_after;
    if (!a.resume.empty()) opts["resume"] = fs::absolute(a.resume).string();
    write_manifest(dir, "train", cfg, opts,
                   {{"checkpoint", "model.ckpt"}, {"loss_log", "loss.log"}, {"manifest", "manifest.json"}});

    if (text) {
        std::cout << "wrote " << ckpt.string() << ", " << log.string() << ", " << (dir / "manifest.json").string()
                  << "\n";
    } else {
        json r{{"epochs", state.epochs_done},
               {"initial_loss", state.initial_loss},
               {"final_loss", state.epoch_loss.empty() ? state.initial_loss : state.epoch_loss.back()},
               {"checkpoint", ckpt.string()}};
        std::cout << r.dump() << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint, dataset_config, vocab = "all", split = "test", out, manifest, format = "text";
    std::vector<std::size_t> ks;
};

// Keys that shape the model; a dataset config may not change them.
const std::vector<std::string> kModelKeys = {"embed_dim", "depth", "heads", "hidden", "kind"};

train::Vocabulary resolve_vocab(const train::Experiment& exp, const std::string& spec) {
    if (spec == "seen") return exp.vocabulary(exp.seen());
    if (spec == "unseen") return exp.vocabulary(exp.unseen());
    if (spec == "all") return exp.vocabulary(exp.world().class_names());
    if (fs::is_regular_file(spec)) return exp.vocabulary(enc::import_embeddings(spec));
    std::vector<std::string> names;
    std::stringstream ss(spec);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) names.push_back(item);
    if (names.empty()) throw UsageError("--vocab: no class names in '" + spec + "'");
    return exp.vocabulary(names);
}

int cmd_eval(EvalArgs a) {
    const fs::path dir = a.out.empty() ? default_out() : fs::path(a.out);
    if (!a.manifest.empty()) {
        const json m = load_manifest(a.manifest, "eval");
        const json& o = m.at("options");
        a.checkpoint = o.at("checkpoint").get<std::string>();
        a.vocab = o.at("vocab").get<std::string>();
        a.split = o.at("split").get<std::string>();
        a.ks = o.at("ks").get<std::vector<std::size_t>>();
        a.dataset_config = o.value("dataset_config", std::string());
    }
    if (a.checkpoint.empty()) throw UsageError("--checkpoint is required");
    if (a.split != "train" && a.split != "test") throw UsageError("--split must be train or test");

    const auto ckpt = train::load_checkpoint(a.checkpoint);
    const auto model_cfg = train::TrainConfig::parse(ckpt.config_text);
    const auto state = train::from_checkpoint(train::Experiment(model_cfg), ckpt);

    auto cfg = model_cfg;
    if (!a.dataset_config.empty()) {
        for (const auto& [k, v] : train::parse_key_values(read_file(a.dataset_config))) cfg.set(k, v);
        const auto before = train::parse_key_values(model_cfg.to_text());
        const auto after = train::parse_key_values(cfg.to_text());
        for (const auto& k : kModelKeys)
            if (before.at(k) != after.at(k))
                throw ConfigError("dataset config key '" + k + "' changes the model (" + before.at(k) + " -> " +
                                  after.at(k) + ")");
    }
    if (!a.ks.empty()) cfg.ks = a.ks;
    cfg.validate();

    const train::Experiment exp(cfg);
    const auto vocab = resolve_vocab(exp, a.vocab);
    const auto& set = a.split == "train" ? exp.train_set() : exp.test_set();
    const auto report = train::evaluate(exp, state.model, set, vocab);

    fs::create_directories(dir);
    json rec;
    rec["run_id"] = cfg.run_id;
    rec["mAP"] = report.map;
    for (const auto& [k, v] : report.f1) rec["f1@" + std::to_string(k)] = v;
    rec["timestamp"] = cfg.timestamp;
    write_file(dir / "metrics.jsonl", rec.dump() + "\n");

    json opts{{"checkpoint", fs::absolute(a.checkpoint).string()},
              {"vocab", a.vocab},
              {"split", a.split},
              {"ks", cfg.ks}};
    if (!a.dataset_config.empty()) opts["dataset_config"] = fs::absolute(a.dataset_config).string();
    write_manifest(dir, "eval", cfg, opts, {{"metrics", "metrics.jsonl"}, {"manifest", "manifest.json"}});

    if (a.format == "record") {
        std::cout << rec.dump() << "\n";
        return 0;
    }
    std::cout << "split " << a.split << "  images " << report.samples << "  classes " << report.class_names.size()
              << "  excluded " << report.excluded.size() << "\n";
    std::cout << std::fixed << std::setprecision(4) << "mAP " << report.map << "\n";
    for (const auto& [k, v] : report.f1) std::cout << "F1@" << k << " " << v << "\n";
    return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradArgs {
    std::size_t dims = 8, depth = 1, heads = 2, labels = 3, tokens = 5;
    std::optional<double> eps;  // 1e-5, or 1e-3 for the quadratic (exact there)
    std::string kind = "dual";
    std::uint64_t seed = 0;
    bool quadratic = false, corrupt = false;
    std::string format = "text";
};

int cmd_gradcheck(const GradArgs& a) {
    num::GradCheckResult r;
    double limit = 1e-4;
    if (a.quadratic) {
        r = decoder::quadratic_self_test(a.dims, a.eps.value_or(1e-3), a.seed);
        limit = 1e-9;
    } else {
        decoder::GradSuiteConfig g;
        g.embed_dim = a.dims;
        g.depth = a.depth;
        g.heads = a.heads;
        g.labels = a.labels;
        g.tokens = a.tokens;
        g.eps = a.eps.value_or(1e-5);
        g.seed = a.seed;
        g.kind = decoder::block_kind_from_string(a.kind);
        g.corrupt = a.corrupt;
        r = decoder::run_grad_suite(g);
    }
    const bool ok = r.max_relative_error < limit && !r.frozen_violation;
    if (a.format == "record") {
        std::cout << json{{"max_relative_error", r.max_relative_error},
                          {"worst_param", r.worst_param},
                          {"worst_index", r.worst_index},
                          {"checked", r.checked},
                          {"limit", limit},
                          {"pass", ok}}
                         .dump()
                  << "\n";
    } else {
        std::cout << std::scientific << std::setprecision(3) << "max relative error " << r.max_relative_error
                  << " (limit " << limit << ") over " << r.checked << " entries";
        if (!r.worst_param.empty()) std::cout << ", worst " << r.worst_param << "[" << r.worst_index << "]";
        std::cout << "\n" << (ok ? "ok" : "FAILED") << "\n";
    }
    return ok ? 0 : 1;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    std::size_t base = 32, target = 128, patch = 8, embed = 32, repeat = 3;
    unsigned threads = 1;
    std::string format = "text";
};

int cmd_bench(const BenchArgs& a) {
    enc::ImageEncoderConfig ec;
    ec.base_size = a.base;
    ec.patch_size = a.patch;
    ec.embed_dim = a.embed;
    const enc::FrozenImageEncoder encoder(ec);
    const auto plan = pyramid::build_plan(a.base, a.target);
    const auto cost = pyramid::cost_report(plan);

    pyramid::Image img(a.target, ec.channels);
    num::SeedStream rng(0, "bench");
    for (auto& v : img.pixels) v = static_cast<float>(rng.normal());

    double best = 1e300;
    std::size_t rows = 0;
    for (std::size_t r = 0; r < std::max<std::size_t>(a.repeat, 1); ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto tiles = pyramid::extract_tiles(img, plan);
        rows = pyramid::encode_and_stack(tiles, plan, encoder, a.threads).rows();
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        best = std::min(best, dt.count());
    }
    if (a.format == "record") {
        json j = plan_record(plan, cost);
        j["tokens"] = rows;
        j["seconds"] = best;
        std::cout << j.dump() << "\n";
        return 0;
    }
    std::cout << "tiles " << plan.selected_tile_count() << "  tokens " << rows << "  pyramid units "
              << cost.pyramid_units << "  naive units " << cost.naive_units << "  ratio " << std::fixed
              << std::setprecision(2) << cost.ratio << "\n";
    std::cout << "encode " << std::setprecision(3) << best * 1e3 << " ms (best of " << a.repeat << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pyramid-forwarded open-vocabulary multi-label classification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    PlanArgs pa;
    auto* plan = app.add_subcommand("plan", "Show a pyramid plan and its cost");
    plan->add_option("--base-size", pa.base, "Encoder input side")->required();
    plan->add_option("--target-size", pa.target, "Image side")->required();
    plan->add_option("--levels", pa.levels, "Level subset, e.g. [0,2]");
    plan->add_flag("--cls-only", pa.cls_only, "Keep only CLS tokens above the bottom level");
    plan->add_option("--format", pa.format)->check(CLI::IsMember({"text", "record"}));

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train decoder and head on the synthetic world");
    tr->add_option("--config", ta.config, "key=value config file")->check(CLI::ExistingFile);
    tr->add_option("--seed", ta.seed);
    tr->add_option("--lr", ta.lr);
    tr->add_option("--epochs", ta.epochs);
    tr->add_option("--set", ta.sets, "Extra key=value override (repeatable)");
    tr->add_option("--out", ta.out, "Output directory (default $ADDS_OUTPUT_DIR or ./adds_out)");
    tr->add_option("--resume", ta.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
    tr->add_option("--stop-after", ta.stop_after, "Stop after this epoch");
    tr->add_option("--manifest", ta.manifest, "Rerun a previous train manifest")->check(CLI::ExistingFile);
    tr->add_option("--format", ta.format)->check(CLI::IsMember({"text", "record"}));

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--checkpoint", ea.checkpoint)->check(CLI::ExistingFile);
    ev->add_option("--dataset-config", ea.dataset_config, "key=value dataset overrides")->check(CLI::ExistingFile);
    ev->add_option("--k", ea.ks, "F1@k cut-off (repeatable)");
    ev->add_option("--vocab", ea.vocab, "seen | unseen | all | embeddings file | comma-separated names");
    ev->add_option("--split", ea.split);
    ev->add_option("--out", ea.out);
    ev->add_option("--manifest", ea.manifest)->check(CLI::ExistingFile);
    ev->add_option("--format", ea.format)->check(CLI::IsMember({"text", "record"}));

    GradArgs ga;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
    gc->add_option("--dims", ga.dims, "Embedding dim");
    gc->add_option("--depth", ga.depth);
    gc->add_option("--heads", ga.heads);
    gc->add_option("--labels", ga.labels);
    gc->add_option("--tokens", ga.tokens);
    gc->add_option("--eps", ga.eps);
    gc->add_option("--kind", ga.kind)->check(CLI::IsMember({"dual", "baseline"}));
    gc->add_option("--seed", ga.seed);
    gc->add_flag("--quadratic", ga.quadratic, "Self-test on a quadratic with known gradient");
    gc->add_flag("--corrupt-grad", ga.corrupt, "Perturb one analytic gradient entry");
    gc->add_option("--format", ga.format)->check(CLI::IsMember({"text", "record"}));

    BenchArgs ba;
    auto* bn = app.add_subcommand("bench", "Time pyramid encoding");
    bn->add_option("--base-size", ba.base);
    bn->add_option("--target-size", ba.target);
    bn->add_option("--patch-size", ba.patch);
    bn->add_option("--embed-dim", ba.embed);
    bn->add_option("--repeat", ba.repeat);
    bn->add_option("--threads", ba.threads);
    bn->add_option("--format", ba.format)->check(CLI::IsMember({"text", "record"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (plan->parsed()) return cmd_plan(pa);
        if (tr->parsed()) return cmd_train(ta);
        if (ev->parsed()) return cmd_eval(ea);
        if (gc->parsed()) return cmd_gradcheck(ga);
        if (bn->parsed()) return cmd_bench(ba);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
