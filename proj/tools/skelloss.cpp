// skelloss: command-line front end for the skeleton recall toolkit.
//
// Exit status: 0 success, 1 validation error (bad flags, bad input data),
// 2 runtime error (I/O failure, numerical breakdown).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelloss/experiment.hpp"
#include "skelloss/gradcheck.hpp"
#include "skelloss/io.hpp"
#include "skelloss/json_config.hpp"
#include "skelloss/losses.hpp"
#include "skelloss/metrics.hpp"
#include "skelloss/raster.hpp"
#include "skelloss/stats.hpp"
#include "skelloss/synth.hpp"
#include "skelloss/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skelloss;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    bool json = false;
    bool quiet = false;
    std::string command;
};

Globals g;

void emit(json doc, const std::string& text) {
    if (g.json) {
        doc["command"] = g.command;
        std::cout << doc.dump(2) << '\n';
    } else if (!g.quiet && !text.empty()) {
        std::cout << text;
        if (text.back() != '\n') std::cout << '\n';
    }
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string read_text(const std::string& path) { return io::detail::read_file(path); }

void write_text(const fs::path& path, const std::string& text) { io::detail::write_file(path.string(), text); }

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory '" + dir.string() + "'");
}

// Sorted *.pgm files of a directory; names starting with `prefix` only when
// the directory holds any such file.
std::vector<fs::path> list_pgm(const fs::path& dir, const std::string& prefix) {
    if (!fs::is_directory(dir)) throw ValidationError("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> all;
    std::vector<fs::path> matching;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".pgm") continue;
        all.push_back(e.path());
        if (e.path().filename().string().rfind(prefix, 0) == 0) matching.push_back(e.path());
    }
    auto& out = matching.empty() ? all : matching;
    std::sort(out.begin(), out.end());
    return out;
}

json metrics_json(const metrics::ClassMetrics& m) {
    return {{"dsc", m.dsc}, {"cldice", m.cldice}, {"jsi", m.jsi}, {"fnr", m.fnr}, {"fpr", m.fpr}};
}

json breakdown_json(const losses::LossBreakdown& b) {
    return {{"dice", b.dice}, {"cce", b.cce}, {"srl", b.srl}, {"total", b.total}};
}

LabelMask make_target(const LabelMask& gt, const std::string& se, bool no_ts) {
    const auto elem = raster::parse_se(se);
    return no_ts ? raster::skeletonize_no_ts(gt, elem) : raster::tubed_skeletonize(gt, elem);
}

// ---------------------------------------------------------------------------

struct MaskOpts {
    std::string in;
    std::string out;
    std::string se = "square:1";
    bool tubed = false;
    bool no_ts = false;
    bool ascii = false;
};

void add_mask_opts(CLI::App* c, MaskOpts& o, bool with_tubed) {
    c->add_option("--in", o.in, "Input label mask (PGM)")->required()->check(CLI::ExistingFile);
    c->add_option("--out", o.out, "Output mask (PGM)")->required();
    c->add_option("--se", o.se, "Dilation element, square:R or disk:R")->capture_default_str();
    auto* no_ts = c->add_flag("--no-ts", o.no_ts, "Dilated skeleton without the ground-truth product");
    if (with_tubed) c->add_flag("--tubed", o.tubed, "Tubed skeleton (skeleton, dilate, multiply by GT)")->excludes(no_ts);
    c->add_flag("--ascii", o.ascii, "Write P2 instead of P5");
}

int run_mask(const MaskOpts& o, const char* command, bool transform) {
    const LabelMask mask = io::read_label_mask(o.in);
    const auto enc = o.ascii ? io::PgmEncoding::ascii : io::PgmEncoding::binary;
    std::string mode;
    std::size_t out_pixels = 0;
    if (transform || o.tubed || o.no_ts) {
        mode = o.no_ts ? "no-ts" : "tubed";
        const LabelMask t = make_target(mask, o.se, o.no_ts);
        for (std::size_t i = 0; i < t.size(); ++i) out_pixels += t[i] != 0 ? 1 : 0;
        io::write_pgm(o.out, t, enc);
    } else {
        mode = "skeleton";
        const BinaryMask s = raster::skeletonize(raster::binarize(mask));
        out_pixels = raster::count(s);
        io::write_pgm(o.out, s, enc);
    }
    const std::size_t fg = raster::count(raster::binarize(mask));
    json doc = {{"command", command}, {"in", o.in},           {"out", o.out},
                {"mode", mode},       {"width", mask.width()}, {"height", mask.height()},
                {"classes", mask.num_classes()}, {"foreground_pixels", fg}, {"output_pixels", out_pixels}};
    if (mode != "skeleton") doc["se"] = raster::parse_se(o.se).to_string();
    emit(doc, mode + ": " + std::to_string(fg) + " foreground -> " + std::to_string(out_pixels) + " pixels, wrote " +
                  o.out);
    return 0;
}

// ---------------------------------------------------------------------------

struct LossOpts {
    std::string pred;
    std::string gt;
    std::string tubed;
    std::string se = "square:1";
    bool no_ts = false;
    double alpha = 1.0;
    double epsilon = 1e-6;
    bool include_background = false;
    double threshold = 0.5;
};

void add_loss_input_opts(CLI::App* c, LossOpts& o) {
    c->add_option("--pred", o.pred, "Probability map (SLPM)")->required()->check(CLI::ExistingFile);
    c->add_option("--gt", o.gt, "Ground-truth label mask (PGM)")->required()->check(CLI::ExistingFile);
    c->add_option("--tubed", o.tubed, "Skeleton target (PGM); computed from --gt when omitted")
        ->check(CLI::ExistingFile);
    c->add_option("--se", o.se, "Dilation element when computing the target")->capture_default_str();
    c->add_flag("--no-ts", o.no_ts, "Compute the target without the ground-truth product");
    c->add_option("--epsilon", o.epsilon, "Smoothing / clamp epsilon")->capture_default_str();
    c->add_flag("--include-background", o.include_background, "Score the background class as well");
}

struct LossInputs {
    ProbMap pred;
    LabelMask gt;
    LabelMask tubed;
    losses::LossConfig cfg;
};

LossInputs load_loss_inputs(const LossOpts& o) {
    LossInputs in{io::read_slpm(o.pred), io::read_label_mask(o.gt), LabelMask(1, 1, 1), {}};
    in.tubed = o.tubed.empty() ? make_target(in.gt, o.se, o.no_ts) : io::read_label_mask(o.tubed);
    in.cfg.alpha = o.alpha;
    in.cfg.epsilon = o.epsilon;
    in.cfg.include_background = o.include_background;
    in.cfg.validate();
    return in;
}

int run_loss(const LossOpts& o) {
    const LossInputs in = load_loss_inputs(o);
    const auto r = losses::combined_loss(in.pred, in.gt, in.tubed, in.cfg);
    json doc = breakdown_json(r.breakdown);
    doc["alpha"] = in.cfg.alpha;
    doc["epsilon"] = in.cfg.epsilon;
    doc["include_background"] = in.cfg.include_background;
    doc["srl_empty"] = r.srl_empty;
    doc["width"] = in.pred.width();
    doc["height"] = in.pred.height();
    doc["channels"] = in.pred.channels();
    emit(doc, "dice " + fmt("%.6f", r.breakdown.dice) + "  cce " + fmt("%.6f", r.breakdown.cce) + "  srl " +
                  fmt("%.6f", r.breakdown.srl) + "  total " + fmt("%.6f", r.breakdown.total));
    return 0;
}

int run_audit(const LossOpts& o) {
    const LossInputs in = load_loss_inputs(o);
    const auto rep = gradcheck::category_audit(in.pred, in.gt, in.tubed, o.threshold, in.cfg);
    json buckets = json::array();
    std::ostringstream text;
    text << "class overlap skeleton count min max mean\n";
    for (const auto& b : rep.buckets) {
        json jb = {{"class", b.class_index},
                   {"overlap", gradcheck::to_string(b.overlap)},
                   {"on_skeleton", b.on_skeleton},
                   {"count", b.stats.count}};
        if (b.stats.count > 0) {
            jb["min"] = b.stats.min;
            jb["max"] = b.stats.max;
            jb["mean"] = b.stats.mean;
        } else {
            jb["min"] = nullptr;
            jb["max"] = nullptr;
            jb["mean"] = nullptr;
        }
        buckets.push_back(jb);
        text << b.class_index << ' ' << gradcheck::to_string(b.overlap) << ' ' << (b.on_skeleton ? "on" : "off") << ' '
             << b.stats.count;
        if (b.stats.count > 0) {
            text << ' ' << fmt("%.6g", b.stats.min) << ' ' << fmt("%.6g", b.stats.max) << ' '
                 << fmt("%.6g", b.stats.mean);
        }
        text << '\n';
    }
    text << "off-skeleton zero: " << (rep.off_skeleton_zero ? "yes" : "no")
         << ", on-skeleton constant: " << (rep.on_skeleton_constant ? "yes" : "no") << '\n';
    json doc = {{"threshold", o.threshold},
                {"num_pixels", rep.num_pixels},
                {"num_classes", rep.num_classes},
                {"active_classes", rep.active_classes},
                {"expected_on_skeleton", rep.expected_on_skeleton},
                {"skeleton_outside_gt", rep.skeleton_outside_gt},
                {"off_skeleton_zero", rep.off_skeleton_zero},
                {"on_skeleton_constant", rep.on_skeleton_constant},
                {"buckets", buckets}};
    emit(doc, text.str());
    return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckOpts {
    std::string loss;
    std::size_t size = 16;
    std::size_t channels = 2;
    std::size_t trials = 10;
    double h = 1e-4;
    double tol = 1e-4;
    double alpha = 1.0;
    bool include_background = false;
};

int run_gradcheck(const GradcheckOpts& o) {
    const auto kind = gradcheck::parse_loss_kind(o.loss);
    if (o.size < 4) throw ValidationError("gradcheck: --size must be >= 4");
    losses::LossConfig cfg;
    cfg.alpha = o.alpha;
    cfg.include_background = o.include_background;
    cfg.validate();
    const auto r = gradcheck::random_gradcheck(kind, o.size, o.channels, o.trials, g.seed, o.h, o.tol, cfg);
    json doc = {{"loss", gradcheck::to_string(kind)},
                {"size", o.size},
                {"channels", o.channels},
                {"trials", o.trials},
                {"seed", g.seed},
                {"h", o.h},
                {"tolerance", o.tol},
                {"max_abs_err", r.worst.max_abs_err},
                {"max_rel_err", r.worst.max_rel_err},
                {"worst",
                 {{"trial", r.worst_trial},
                  {"channel", r.worst.worst_channel},
                  {"x", r.worst.worst_x},
                  {"y", r.worst.worst_y}}},
                {"pass", r.worst.pass}};
    emit(doc, std::string(gradcheck::to_string(kind)) + ": max rel err " + fmt("%.3e", r.worst.max_rel_err) +
                  ", max abs err " + fmt("%.3e", r.worst.max_abs_err) + " over " + std::to_string(o.trials) +
                  " trials -> " + (r.worst.pass ? "PASS" : "FAIL"));
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalOpts {
    std::string pred_dir;
    std::string gt_dir;
    std::string csv;
};

int run_eval(const EvalOpts& o) {
    const auto gts = list_pgm(o.gt_dir, "gt_");
    if (gts.empty()) throw ValidationError("no PGM masks in '" + o.gt_dir + "'");
    std::string csv = "image,class,dsc,cldice,jsi,fnr,fpr\n";
    auto row = [&](const std::string& image, const std::string& cls, const metrics::ClassMetrics& m) {
        csv += image + "," + cls + "," + fmt("%.6f", m.dsc) + "," + fmt("%.6f", m.cldice) + "," + fmt("%.6f", m.jsi) +
               "," + fmt("%.6f", m.fnr) + "," + fmt("%.6f", m.fpr) + "\n";
    };
    json per_image = json::array();
    metrics::ClassMetrics mean;
    for (const auto& gt_path : gts) {
        const fs::path pred_path = fs::path(o.pred_dir) / gt_path.filename();
        if (!fs::exists(pred_path)) throw ValidationError("missing prediction '" + pred_path.string() + "'");
        const LabelMask gt = io::read_label_mask(gt_path.string());
        const LabelMask pred = io::read_label_mask(pred_path.string());
        const auto rep = metrics::evaluate(pred, gt);
        const std::string name = gt_path.filename().string();
        for (std::size_t k = 0; k < rep.per_class.size(); ++k) row(name, std::to_string(k + 1), rep.per_class[k]);
        row(name, "macro", rep.macro);
        per_image.push_back({{"image", name}, {"macro", metrics_json(rep.macro)}});
        mean.dsc += rep.macro.dsc;
        mean.cldice += rep.macro.cldice;
        mean.jsi += rep.macro.jsi;
        mean.fnr += rep.macro.fnr;
        mean.fpr += rep.macro.fpr;
    }
    const double inv = 1.0 / static_cast<double>(gts.size());
    mean.dsc *= inv;
    mean.cldice *= inv;
    mean.jsi *= inv;
    mean.fnr *= inv;
    mean.fpr *= inv;
    if (!o.csv.empty()) write_text(o.csv, csv);
    json doc = {{"images", gts.size()}, {"mean", metrics_json(mean)}, {"per_image", per_image}};
    if (!o.csv.empty()) doc["csv"] = o.csv;
    emit(doc, o.csv.empty() ? csv
                            : std::to_string(gts.size()) + " images, mean DSC " + fmt("%.2f", mean.dsc) + ", wrote " +
                                  o.csv);
    return 0;
}

// ---------------------------------------------------------------------------

struct TtestOpts {
    std::string a;
    std::string b;
    std::string metric;
    std::string direction = "greater";
};

// Reads one metric column. Files written by `eval` carry per-class rows, so
// only their `macro` rows are used: one sample per image.
stats::SampleSet load_samples(const std::string& path, const std::string& metric) {
    const auto t = experiment::parse_csv_table(read_text(path));
    stats::SampleSet s;
    s.label = path;
    const bool has = std::find(t.names.begin(), t.names.end(), metric) != t.names.end();
    if (!has && t.names.size() != 1) throw ValidationError("'" + path + "' has no column '" + metric + "'");
    const std::string col = has ? metric : t.names.front();
    const bool per_class = std::find(t.names.begin(), t.names.end(), "class") != t.names.end();
    s.values = per_class ? experiment::csv_numeric_column(t, col, "class", "macro")
                         : experiment::csv_numeric_column(t, col);
    return s;
}

int run_ttest(const TtestOpts& o) {
    const auto alt = stats::parse_alternative(o.direction);
    const auto a = load_samples(o.a, o.metric);
    const auto b = load_samples(o.b, o.metric);
    const auto r = stats::t_test_one_sided(a, b, alt);
    const auto sa = stats::summarize(a);
    const auto sb = stats::summarize(b);
    json doc = {{"metric", o.metric},       {"direction", stats::to_string(alt)},
                {"n_a", sa.n},              {"n_b", sb.n},
                {"mean_a", sa.mean},        {"mean_b", sb.mean},
                {"std_a", sa.std},          {"std_b", sb.std},
                {"t_value", r.t_value},     {"df", r.df},
                {"p_value", r.p_value}};
    emit(doc, o.metric + ": t = " + fmt("%.4f", r.t_value) + ", df = " + fmt("%.4f", r.df) + ", p(" +
                  stats::to_string(alt) + ") = " + fmt("%.4f", r.p_value));
    return 0;
}

// ---------------------------------------------------------------------------

struct SynthOpts {
    std::string config;
    std::string out;
    std::string kind = "tubular";
    std::size_t count = 80;
    std::size_t size = 64;
    std::vector<int> shapes;
    std::vector<int> width;
    double noise = 0.15;
    double contrast = 0.6;
    unsigned classes = 1;
};

int run_synth(CLI::App* cmd, const SynthOpts& o, bool seed_given) {
    synth::SynthConfig cfg;
    if (!o.config.empty()) cfg = parse_json_file(o.config).get<synth::SynthConfig>();
    if (cmd->count("--kind") || o.config.empty()) cfg.kind = synth::parse_kind(o.kind);
    if (cmd->count("--count") || o.config.empty()) cfg.count = o.count;
    if (cmd->count("--size") || o.config.empty()) cfg.size = o.size;
    if (cmd->count("--noise") || o.config.empty()) cfg.noise_sigma = o.noise;
    if (cmd->count("--contrast") || o.config.empty()) cfg.contrast = o.contrast;
    if (cmd->count("--classes") || o.config.empty()) cfg.classes = o.classes;
    if (!o.shapes.empty()) {
        cfg.shapes_min = o.shapes[0];
        cfg.shapes_max = o.shapes[1];
    }
    if (!o.width.empty()) {
        cfg.width_min = o.width[0];
        cfg.width_max = o.width[1];
    }
    if (seed_given || o.config.empty()) cfg.seed = g.seed;
    const auto data = synth::generate(cfg);

    const fs::path dir(o.out);
    ensure_dir(dir);
    json files = json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        char img_name[32];
        char gt_name[32];
        std::snprintf(img_name, sizeof img_name, "image_%03zu.pgm", i);
        std::snprintf(gt_name, sizeof gt_name, "gt_%03zu.pgm", i);
        io::write_pgm((dir / img_name).string(), data[i].image);
        io::write_pgm((dir / gt_name).string(), data[i].gt);
        files.push_back({{"image", img_name}, {"gt", gt_name}, {"foreground", raster::count(raster::binarize(data[i].gt))}});
    }
    json manifest = {{"config", cfg}, {"files", files}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    json doc = {{"out", o.out}, {"count", data.size()}, {"config", cfg}};
    emit(doc, "wrote " + std::to_string(data.size()) + " image/mask pairs to " + o.out);
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
    std::string data;
    std::string out;
    std::string config;
    std::string history;
    std::string pred_out;
    double lr = 2.0;
    std::size_t epochs = 150;
    double alpha = 1.0;
    double epsilon = 1e-6;
    bool include_background = false;
    bool no_ts = false;
    std::string se = "square:1";
    double threshold = 0.5;
};

// Pairs image_X.pgm with gt_X.pgm in a directory written by `synth`.
std::vector<std::pair<std::string, synth::SynthSample>> load_dataset(const fs::path& dir) {
    std::vector<std::pair<std::string, synth::SynthSample>> out;
    for (const auto& img : list_pgm(dir, "image_")) {
        const std::string name = img.filename().string();
        if (name.rfind("image_", 0) != 0) continue;
        const fs::path gt = dir / ("gt_" + name.substr(6));
        if (!fs::exists(gt)) throw ValidationError("missing mask '" + gt.string() + "' for '" + img.string() + "'");
        out.push_back({gt.filename().string(), {io::read_image(img.string()), io::read_label_mask(gt.string())}});
    }
    if (out.empty()) throw ValidationError("no image_*.pgm / gt_*.pgm pairs in '" + dir.string() + "'");
    return out;
}

int run_train(CLI::App* cmd, const TrainOpts& o, bool seed_given) {
    trainer::TrainConfig cfg;
    if (!o.config.empty()) cfg = parse_json_file(o.config).get<trainer::TrainConfig>();
    const bool from_flags = o.config.empty();
    if (from_flags || cmd->count("--lr")) cfg.learning_rate = o.lr;
    if (from_flags || cmd->count("--epochs")) cfg.epochs = o.epochs;
    if (from_flags || cmd->count("--alpha")) cfg.loss.alpha = o.alpha;
    if (from_flags || cmd->count("--epsilon")) cfg.loss.epsilon = o.epsilon;
    if (from_flags || cmd->count("--include-background")) cfg.loss.include_background = o.include_background;
    if (from_flags || cmd->count("--no-ts")) cfg.use_ts = !o.no_ts;
    if (from_flags || cmd->count("--se")) cfg.se = raster::parse_se(o.se);
    if (from_flags || seed_given) cfg.seed = g.seed;
    cfg.validate();

    const auto named = load_dataset(o.data);
    std::vector<synth::SynthSample> data;
    for (const auto& [name, s] : named) data.push_back(s);
    const auto result = trainer::train(data, cfg);
    io::write_params(o.out, result.params);

    if (!o.history.empty()) {
        std::string csv = "epoch,dice,cce,srl,total\n";
        for (std::size_t e = 0; e < result.history.size(); ++e) {
            const auto& h = result.history[e];
            csv += std::to_string(e) + "," + fmt("%.17g", h.dice) + "," + fmt("%.17g", h.cce) + "," +
                   fmt("%.17g", h.srl) + "," + fmt("%.17g", h.total) + "\n";
        }
        write_text(o.history, csv);
    }
    if (!o.pred_out.empty()) {
        ensure_dir(o.pred_out);
        for (const auto& [name, s] : named) {
            io::write_pgm((fs::path(o.pred_out) / name).string(), trainer::predict(result.params, s.image, o.threshold));
        }
    }
    const auto ev = trainer::evaluate(result.params, data, o.threshold);
    json doc = {{"images", data.size()},
                {"epochs", cfg.epochs},
                {"config", cfg},
                {"params", o.out},
                {"train_metrics", metrics_json(ev.aggregate)}};
    doc["final_loss"] = result.history.empty() ? json(nullptr) : breakdown_json(result.history.back());
    emit(doc, "trained on " + std::to_string(data.size()) + " images for " + std::to_string(cfg.epochs) +
                  " epochs, train DSC " + fmt("%.2f", ev.aggregate.dsc) + ", wrote " + o.out);
    return 0;
}

// ---------------------------------------------------------------------------

struct ExperimentOpts {
    std::string config;
    std::string out;
    unsigned jobs = 1;
};

std::vector<std::pair<std::string, std::string>> report_files(const experiment::ExperimentReport& rep) {
    std::vector<std::pair<std::string, std::string>> files = {
        {"report.csv", experiment::report_csv(rep)},
        {"summary.csv", experiment::summary_csv(rep)},
        {"ttests.csv", experiment::ttests_csv(rep)},
    };
    for (const auto& arm : rep.config.arms) files.push_back({"metrics_" + arm + ".csv", experiment::arm_metrics_csv(rep, arm)});
    return files;
}

json ttests_json(const experiment::ExperimentReport& rep) {
    json out = json::array();
    for (const auto& t : rep.ttests) {
        out.push_back({{"baseline", t.baseline},
                       {"arm", t.arm},
                       {"metric", t.metric},
                       {"t_value", t.result.t_value},
                       {"p_value", t.result.p_value},
                       {"df", t.result.df},
                       {"p_reversed", t.p_reversed}});
    }
    return out;
}

json arms_json(const experiment::ExperimentReport& rep) {
    json out = json::array();
    for (const auto& a : rep.arms) {
        json m = json::object();
        for (std::size_t i = 0; i < std::size(experiment::kMetrics); ++i) {
            m[experiment::kMetrics[i].name] = {{"mean", a.summaries[i].mean}, {"std", a.summaries[i].std}};
        }
        out.push_back({{"arm", a.arm}, {"metrics", m}});
    }
    return out;
}

int run_experiment_cmd(const ExperimentOpts& o) {
    const auto cfg = parse_json_file(o.config).get<experiment::ExperimentConfig>();
    const auto rep = experiment::run_experiment(cfg, std::max(1u, o.jobs));
    const fs::path dir(o.out);
    ensure_dir(dir);
    std::vector<std::string> written;
    write_text(dir / "config.json", json(cfg).dump(2) + "\n");
    written.push_back("config.json");
    for (const auto& [name, text] : report_files(rep)) {
        write_text(dir / name, text);
        written.push_back(name);
    }
    write_text(dir / "history.csv", experiment::history_csv(rep));
    written.push_back("history.csv");
    for (const auto& run : rep.runs) {
        const std::string name = "params_" + run.arm + "_seed" + std::to_string(run.seed) + ".bin";
        io::write_params((dir / name).string(), run.training.params);
        written.push_back(name);
    }
    json doc = {{"name", cfg.name}, {"out", o.out}, {"files", written}, {"arms", arms_json(rep)}, {"ttests", ttests_json(rep)}};
    emit(doc, experiment::report_csv(rep) + (rep.ttests.empty() ? "" : "\n" + experiment::ttests_csv(rep)));
    return 0;
}

struct ReportOpts {
    std::string results;
    std::string out;
};

// Rebuilds the tables of an experiment directory from config.json and the
// per-arm metrics files, without retraining.
int run_report(const ReportOpts& o) {
    const fs::path dir(o.results);
    experiment::ExperimentReport rep;
    rep.config = parse_json_file((dir / "config.json").string()).get<experiment::ExperimentConfig>();
    rep.config.validate();
    for (const auto& arm : rep.config.arms) {
        const auto cols = experiment::parse_numeric_csv(read_text((dir / ("metrics_" + arm + ".csv")).string()));
        const auto& seeds = cols.count("seed") ? cols.at("seed") : std::vector<double>{};
        if (seeds.size() != rep.config.seeds.size()) {
            throw ValidationError("metrics_" + arm + ".csv does not list every configured seed");
        }
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            experiment::RunResult r;
            r.arm = arm;
            r.seed = rep.config.seeds[s];
            if (static_cast<std::uint64_t>(seeds[s]) != r.seed) {
                throw ValidationError("metrics_" + arm + ".csv seeds are not in config order");
            }
            for (const auto& m : experiment::kMetrics) {
                if (!cols.count(m.name)) throw ValidationError("metrics_" + arm + ".csv lacks column " + m.name);
                r.test.*m.field = cols.at(m.name)[s];
            }
            rep.runs.push_back(r);
        }
    }
    experiment::summarize_runs(rep);
    std::vector<std::string> written;
    if (!o.out.empty()) {
        ensure_dir(o.out);
        for (const auto& [name, text] : report_files(rep)) {
            if (name.rfind("metrics_", 0) == 0) continue;
            write_text(fs::path(o.out) / name, text);
            written.push_back(name);
        }
    }
    json doc = {{"name", rep.config.name}, {"files", written}, {"arms", arms_json(rep)}, {"ttests", ttests_json(rep)}};
    emit(doc, experiment::report_csv(rep) + (rep.ttests.empty() ? "" : "\n" + experiment::ttests_csv(rep)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Skeleton recall loss toolkit: skeleton transforms, losses, gradient checks, metrics, statistics, "
                 "synthetic data and a small trainer."};
    app.name("skelloss");
    app.require_subcommand(1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);
    auto* seed_opt = app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
    app.add_flag("--json", g.json, "Print a single JSON document on stdout");
    app.add_flag("--quiet", g.quiet, "Suppress informational output");

    MaskOpts skel_o;
    auto* skel = app.add_subcommand("skeletonize", "Skeletonize a mask (optionally the tubed transform)");
    add_mask_opts(skel, skel_o, true);

    MaskOpts tr_o;
    auto* transform = app.add_subcommand("transform", "Tubed skeleton transform of a label mask");
    add_mask_opts(transform, tr_o, false);

    LossOpts loss_o;
    auto* loss = app.add_subcommand("loss", "Dice + cross-entropy + alpha * skeleton recall on one prediction");
    add_loss_input_opts(loss, loss_o);
    loss->add_option("--alpha", loss_o.alpha, "Skeleton recall weight")->capture_default_str();

    GradcheckOpts gc_o;
    auto* gc = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients on random instances");
    gc->add_option("--loss", gc_o.loss, "srl, dice, cce or combined")->required();
    gc->add_option("--size", gc_o.size, "Image side length")->capture_default_str();
    gc->add_option("--channels", gc_o.channels, "Channels including background")->capture_default_str();
    gc->add_option("--trials", gc_o.trials, "Random instances")->capture_default_str();
    gc->add_option("--step", gc_o.h, "Finite-difference step")->capture_default_str();
    gc->add_option("--tol", gc_o.tol, "Relative error tolerance")->capture_default_str();
    gc->add_option("--alpha", gc_o.alpha, "Skeleton recall weight (combined)")->capture_default_str();
    gc->add_flag("--include-background", gc_o.include_background, "Score the background class as well");

    LossOpts audit_o;
    auto* audit = app.add_subcommand("audit", "Skeleton recall gradient by pixel category");
    add_loss_input_opts(audit, audit_o);
    audit->add_option("--threshold", audit_o.threshold, "Foreground threshold (binary maps)")->capture_default_str();

    EvalOpts eval_o;
    auto* eval = app.add_subcommand("eval", "DSC, clDice, JSI, FNR, FPR of predicted masks");
    eval->add_option("--pred-dir", eval_o.pred_dir, "Predicted masks, matched by file name")->required();
    eval->add_option("--gt-dir", eval_o.gt_dir, "Ground-truth masks (gt_*.pgm if present, else *.pgm)")->required();
    eval->add_option("--csv", eval_o.csv, "Write per-image, per-class rows here");

    TtestOpts tt_o;
    auto* tt = app.add_subcommand("ttest", "One-sided Welch t-test between two sample files");
    tt->add_option("--a", tt_o.a, "CSV with samples of group a")->required()->check(CLI::ExistingFile);
    tt->add_option("--b", tt_o.b, "CSV with samples of group b")->required()->check(CLI::ExistingFile);
    tt->add_option("--metric", tt_o.metric, "Column to compare")->required();
    tt->add_option("--direction", tt_o.direction, "greater: mean(a) > mean(b); less: mean(a) < mean(b)")
        ->capture_default_str();

    SynthOpts syn_o;
    auto* syn = app.add_subcommand("synth", "Generate a synthetic dataset");
    syn->add_option("--config", syn_o.config, "Dataset JSON; flags given explicitly override it")
        ->check(CLI::ExistingFile);
    syn->add_option("--out", syn_o.out, "Output directory")->required();
    syn->add_option("--kind", syn_o.kind, "tubular or blobs")->capture_default_str();
    syn->add_option("--count", syn_o.count, "Number of images")->capture_default_str();
    syn->add_option("--size", syn_o.size, "Image side length")->capture_default_str();
    syn->add_option("--shapes", syn_o.shapes, "Shapes per image: MIN MAX")->expected(2);
    syn->add_option("--width", syn_o.width, "Stroke width / blob semi-axis: MIN MAX")->expected(2);
    syn->add_option("--noise", syn_o.noise, "Gaussian noise sigma")->capture_default_str();
    syn->add_option("--contrast", syn_o.contrast, "Foreground intensity")->capture_default_str();
    syn->add_option("--classes", syn_o.classes, "Foreground classes")->capture_default_str();

    TrainOpts train_o;
    auto* trn = app.add_subcommand("train", "Train the pixel classifier on a synth directory");
    trn->add_option("--data", train_o.data, "Directory with image_*.pgm and gt_*.pgm")->required();
    trn->add_option("--out", train_o.out, "Weights file")->required();
    trn->add_option("--config", train_o.config, "Training JSON; flags given explicitly override it")
        ->check(CLI::ExistingFile);
    trn->add_option("--lr", train_o.lr, "Learning rate")->capture_default_str();
    trn->add_option("--epochs", train_o.epochs, "Full-batch epochs")->capture_default_str();
    trn->add_option("--alpha", train_o.alpha, "Skeleton recall weight (0: vanilla)")->capture_default_str();
    trn->add_option("--epsilon", train_o.epsilon, "Smoothing / clamp epsilon")->capture_default_str();
    trn->add_flag("--include-background", train_o.include_background, "Score the background class as well");
    trn->add_flag("--no-ts", train_o.no_ts, "Skeleton target without the ground-truth product");
    trn->add_option("--se", train_o.se, "Dilation element")->capture_default_str();
    trn->add_option("--history", train_o.history, "Write per-epoch losses here (CSV)");
    trn->add_option("--pred-out", train_o.pred_out, "Write hard predictions here, named like the masks");
    trn->add_option("--threshold", train_o.threshold, "Foreground threshold")->capture_default_str();

    ExperimentOpts exp_o;
    auto* exp = app.add_subcommand("experiment", "Train and compare arms over seeds");
    exp->add_option("--config", exp_o.config, "Experiment JSON")->required()->check(CLI::ExistingFile);
    exp->add_option("--out", exp_o.out, "Output directory")->required();
    exp->add_option("--jobs", exp_o.jobs, "Parallel (arm, seed) jobs; output does not depend on it")
        ->capture_default_str();

    ReportOpts rep_o;
    auto* report = app.add_subcommand("report", "Rebuild the tables of an experiment directory");
    report->add_option("--results", rep_o.results, "Directory written by `experiment`")->required();
    report->add_option("--out", rep_o.out, "Write report.csv, summary.csv and ttests.csv here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        const bool seed_given = seed_opt->count() > 0;
        g.command = app.get_subcommands().front()->get_name();
        if (*skel) return run_mask(skel_o, "skeletonize", false);
        if (*transform) return run_mask(tr_o, "transform", true);
        if (*loss) return run_loss(loss_o);
        if (*gc) return run_gradcheck(gc_o);
        if (*audit) return run_audit(audit_o);
        if (*eval) return run_eval(eval_o);
        if (*tt) return run_ttest(tt_o);
        if (*syn) return run_synth(syn, syn_o, seed_given);
        if (*trn) return run_train(trn, train_o, seed_given);
        if (*exp) return run_experiment_cmd(exp_o);
        if (*report) return run_report(rep_o);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
