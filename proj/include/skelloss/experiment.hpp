#pragma once
// Multi-arm, multi-seed experiment runner: trains every (arm, seed) pair on a
// synthetic dataset, evaluates on the held-out split, summarises each metric
// as mean ± std over seeds and t-tests every arm against a baseline arm.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "skelloss/stats.hpp"
#include "skelloss/synth.hpp"
#include "skelloss/trainer.hpp"

namespace skelloss::experiment {

struct MetricDef {
    const char* name;
    bool higher_is_better;
    double metrics::ClassMetrics::*field;
};

inline constexpr MetricDef kMetrics[] = {
    {"dsc", true, &metrics::ClassMetrics::dsc},   {"cldice", true, &metrics::ClassMetrics::cldice},
    {"jsi", true, &metrics::ClassMetrics::jsi},   {"fnr", false, &metrics::ClassMetrics::fnr},
    {"fpr", false, &metrics::ClassMetrics::fpr},
};

inline const MetricDef& metric_def(const std::string& name) {
    for (const auto& m : kMetrics) {
        if (name == m.name) return m;
    }
    throw ValidationError("unknown metric '" + name + "'");
}

/// Known arms: "vanilla" (alpha 0), "srl" (tubed skeleton), "srl-no-ts"
/// (dilated skeleton without the ground-truth product).
inline trainer::TrainConfig arm_config(const std::string& arm, const trainer::TrainConfig& base) {
    trainer::TrainConfig c = base;
    if (arm == "vanilla") {
        c.loss.alpha = 0.0;
    } else if (arm == "srl") {
        c.use_ts = true;
    } else if (arm == "srl-no-ts") {
        c.use_ts = false;
    } else {
        throw ValidationError("unknown arm '" + arm + "' (expected vanilla, srl or srl-no-ts)");
    }
    return c;
}

struct ExperimentConfig {
    std::string name = "synthetic";
    synth::SynthConfig dataset;  // dataset.seed is replaced by each run seed
    double train_fraction = 0.8;
    std::vector<std::string> arms = {"vanilla", "srl"};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    trainer::TrainConfig train;
    double threshold = 0.5;
    std::string baseline;  // empty: the first arm

    const std::string& baseline_arm() const { return baseline.empty() ? arms.front() : baseline; }

    void validate() const {
        dataset.validate();
        train.validate();
        if (arms.empty()) throw ValidationError("experiment: no arms");
        if (seeds.empty()) throw ValidationError("experiment: no seeds");
        for (const auto& a : arms) arm_config(a, train);
        if (std::find(arms.begin(), arms.end(), baseline_arm()) == arms.end()) {
            throw ValidationError("experiment: baseline arm '" + baseline_arm() + "' is not among the arms");
        }
        if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("experiment: threshold must be in (0,1)");
    }
};

struct RunResult {
    std::string arm;
    std::uint64_t seed = 0;
    trainer::TrainResult training;
    metrics::ClassMetrics test;
};

struct ArmSummary {
    std::string arm;
    // Indexed like kMetrics.
    std::vector<stats::SampleSet> samples;
    std::vector<stats::Summary> summaries;
};

struct TTestRow {
    std::string baseline;
    std::string arm;
    std::string metric;
    // t of mean(arm) - mean(baseline); p tests improvement in the metric's
    // preferred direction, p_reversed the opposite direction.
    stats::TTestResult result;
    double p_reversed = 0.5;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RunResult> runs;  // arm-major, seeds in config order
    std::vector<ArmSummary> arms;
    std::vector<TTestRow> ttests;
};

inline const TTestRow* find_ttest(const ExperimentReport& r, const std::string& arm, const std::string& metric) {
    for (const auto& t : r.ttests) {
        if (t.arm == arm && t.metric == metric) return &t;
    }
    return nullptr;
}

/// Fills rep.arms and rep.ttests from rep.runs (arm-major, seeds in config order).
inline void summarize_runs(ExperimentReport& rep) {
    const ExperimentConfig& cfg = rep.config;
    const std::size_t n_seeds = cfg.seeds.size();
    if (rep.runs.size() != cfg.arms.size() * n_seeds) throw ValidationError("summarize_runs: run count mismatch");
    rep.arms.clear();
    rep.ttests.clear();
    for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
        ArmSummary as;
        as.arm = cfg.arms[a];
        for (const auto& m : kMetrics) {
            stats::SampleSet ss;
            ss.label = as.arm + ":" + m.name;
            for (std::size_t s = 0; s < n_seeds; ++s) ss.values.push_back(rep.runs[a * n_seeds + s].test.*m.field);
            as.summaries.push_back(n_seeds >= 2 ? stats::summarize(ss) : stats::Summary{ss.values[0], 0.0, 1});
            as.samples.push_back(std::move(ss));
        }
        rep.arms.push_back(std::move(as));
    }

    if (n_seeds >= 2) {
        const auto base_it = std::find_if(rep.arms.begin(), rep.arms.end(),
                                          [&](const ArmSummary& a) { return a.arm == cfg.baseline_arm(); });
        for (const auto& as : rep.arms) {
            if (as.arm == base_it->arm) continue;
            for (std::size_t m = 0; m < std::size(kMetrics); ++m) {
                const auto better = kMetrics[m].higher_is_better ? stats::Alternative::greater : stats::Alternative::less;
                const auto worse = kMetrics[m].higher_is_better ? stats::Alternative::less : stats::Alternative::greater;
                TTestRow row;
                row.baseline = base_it->arm;
                row.arm = as.arm;
                row.metric = kMetrics[m].name;
                row.result = stats::t_test_one_sided(as.samples[m], base_it->samples[m], better);
                row.p_reversed = stats::t_test_one_sided(as.samples[m], base_it->samples[m], worse).p_value;
                rep.ttests.push_back(row);
            }
        }
    }
}

/// Runs every (arm, seed) job, `jobs` at a time. Output does not depend on `jobs`.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, unsigned jobs = 1) {
    cfg.validate();
    const std::size_t n_seeds = cfg.seeds.size();

    std::vector<std::vector<synth::SynthSample>> train_sets(n_seeds);
    std::vector<std::vector<synth::SynthSample>> test_sets(n_seeds);
    for (std::size_t s = 0; s < n_seeds; ++s) {
        synth::SynthConfig dc = cfg.dataset;
        dc.seed = cfg.seeds[s];
        auto [tr, te] = synth::split(synth::generate(dc), cfg.train_fraction, cfg.seeds[s]);
        train_sets[s] = std::move(tr);
        test_sets[s] = std::move(te);
    }

    ExperimentReport rep;
    rep.config = cfg;
    rep.runs.resize(cfg.arms.size() * n_seeds);
    std::vector<std::exception_ptr> errors(rep.runs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < rep.runs.size(); j = next++) {
            try {
                const std::string& arm = cfg.arms[j / n_seeds];
                const std::size_t s = j % n_seeds;
                RunResult& r = rep.runs[j];
                r.arm = arm;
                r.seed = cfg.seeds[s];
                trainer::TrainConfig tc = arm_config(arm, cfg.train);
                tc.seed = cfg.seeds[s];
                r.training = trainer::train(train_sets[s], tc);
                r.test = trainer::evaluate(r.training.params, test_sets[s], cfg.threshold).aggregate;
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(rep.runs.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    summarize_runs(rep);
    return rep;
}

// ---------------------------------------------------------------------------
// CSV emitters. Numbers use fixed formats so reruns are byte-identical.

namespace detail {

inline std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

inline std::string exact(double v) { return fmt("%.17g", v); }

}  // namespace detail

/// Results table: one row per arm, "mean ± std" per metric; "*" marks a
/// metric where this arm is significantly better than the other (p < 0.05).
inline std::string report_csv(const ExperimentReport& r) {
    std::string out = "dataset,method";
    for (const auto& m : kMetrics) out += std::string(",") + m.name;
    out += '\n';
    for (const auto& as : r.arms) {
        out += r.config.name + "," + as.arm;
        for (std::size_t m = 0; m < std::size(kMetrics); ++m) {
            std::string cell = stats::format_mean_std(as.summaries[m]);
            bool star = false;
            for (const auto& t : r.ttests) {
                if (t.metric != kMetrics[m].name) continue;
                if (t.arm == as.arm && t.result.p_value < 0.05) star = true;
                if (t.baseline == as.arm && t.p_reversed < 0.05) star = true;
            }
            out += "," + cell + (star ? "*" : "");
        }
        out += '\n';
    }
    return out;
}

/// Numeric summary, one row per (arm, metric).
inline std::string summary_csv(const ExperimentReport& r) {
    std::string out = "dataset,arm,metric,n,mean,std\n";
    for (const auto& as : r.arms) {
        for (std::size_t m = 0; m < std::size(kMetrics); ++m) {
            out += r.config.name + "," + as.arm + "," + kMetrics[m].name + "," +
                   std::to_string(as.summaries[m].n) + "," + detail::exact(as.summaries[m].mean) + "," +
                   detail::exact(as.summaries[m].std) + "\n";
        }
    }
    return out;
}

/// One row per (arm, metric) t-test, with df and the reversed-direction p-value.
inline std::string ttests_csv(const ExperimentReport& r) {
    std::string out = "dataset,baseline,arm,metric,t_value,p_value,df,p_reversed\n";
    for (const auto& t : r.ttests) {
        out += r.config.name + "," + t.baseline + "," + t.arm + "," + t.metric + "," +
               detail::fmt("%.4f", t.result.t_value) + "," + detail::fmt("%.4f", t.result.p_value) + "," +
               detail::fmt("%.4f", t.result.df) + "," + detail::fmt("%.4f", t.p_reversed) + "\n";
    }
    return out;
}

inline std::string history_csv(const ExperimentReport& r) {
    std::string out = "arm,seed,epoch,dice,cce,srl,total\n";
    for (const auto& run : r.runs) {
        for (std::size_t e = 0; e < run.training.history.size(); ++e) {
            const auto& h = run.training.history[e];
            out += run.arm + "," + std::to_string(run.seed) + "," + std::to_string(e) + "," + detail::exact(h.dice) +
                   "," + detail::exact(h.cce) + "," + detail::exact(h.srl) + "," + detail::exact(h.total) + "\n";
        }
    }
    return out;
}

/// Per-seed test metrics of one arm; the input format of the ttest command.
inline std::string arm_metrics_csv(const ExperimentReport& r, const std::string& arm) {
    std::string out = "seed";
    for (const auto& m : kMetrics) out += std::string(",") + m.name;
    out += '\n';
    for (const auto& run : r.runs) {
        if (run.arm != arm) continue;
        out += std::to_string(run.seed);
        for (const auto& m : kMetrics) out += "," + detail::exact(run.test.*m.field);
        out += '\n';
    }
    return out;
}

/// CSV split into a header row and string cells; every row must match the header width.
struct CsvTable {
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable parse_csv_table(const std::string& text) {
    CsvTable t;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        ++line_no;
        if (line_no == 1) {
            t.names = std::move(cells);
            continue;
        }
        if (cells.size() != t.names.size()) {
            throw ValidationError("CSV row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(t.names.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    if (t.names.empty()) throw ValidationError("CSV: no header row");
    return t;
}

/// Values of one column as numbers, optionally only rows where `where_col` equals `where_val`.
inline std::vector<double> csv_numeric_column(const CsvTable& t, const std::string& name,
                                              const std::string& where_col = {},
                                              const std::string& where_val = {}) {
    auto index_of = [&](const std::string& n) {
        const auto it = std::find(t.names.begin(), t.names.end(), n);
        if (it == t.names.end()) throw ValidationError("CSV has no column '" + n + "'");
        return static_cast<std::size_t>(it - t.names.begin());
    };
    const std::size_t c = index_of(name);
    const std::size_t w = where_col.empty() ? 0 : index_of(where_col);
    std::vector<double> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!where_col.empty() && t.rows[r][w] != where_val) continue;
        const std::string& cell = t.rows[r][c];
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != cell.size()) {
            throw ValidationError("CSV row " + std::to_string(r + 2) + ": '" + cell + "' is not a number");
        }
        out.push_back(v);
    }
    return out;
}

/// Numeric CSV with a header row: column name -> values in row order.
/// Accepts the per-arm metrics files written by arm_metrics_csv.
inline std::map<std::string, std::vector<double>> parse_numeric_csv(const std::string& text) {
    const CsvTable t = parse_csv_table(text);
    std::map<std::string, std::vector<double>> cols;
    for (const auto& n : t.names) cols[n] = csv_numeric_column(t, n);
    return cols;
}

}  // namespace skelloss::experiment
