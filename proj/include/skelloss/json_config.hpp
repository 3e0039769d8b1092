#pragma once
// JSON (de)serialisation of the configuration types. Requires nlohmann/json.
//
// Experiment config:
//   {"name": "...", "dataset": {SynthConfig}, "train_fraction": 0.8,
//    "arms": ["vanilla", "srl"], "seeds": [1,2,3,4,5], "baseline": "vanilla",
//    "threshold": 0.5, "train": {TrainConfig}}
// Unknown keys are rejected so typos do not silently fall back to defaults.

#include <array>
#include <cstdint>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "skelloss/experiment.hpp"
#include "skelloss/raster.hpp"
#include "skelloss/synth.hpp"
#include "skelloss/trainer.hpp"

namespace skelloss {

namespace json_detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
    if (!j.is_object()) throw ValidationError(std::string(what) + ": expected a JSON object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw ValidationError(std::string(what) + ": unknown key '" + k + "'");
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
    }
}

}  // namespace json_detail

namespace synth {

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = {{"kind", to_string(c.kind)},
         {"count", c.count},
         {"size", c.size},
         {"shapes", {c.shapes_min, c.shapes_max}},
         {"width", {c.width_min, c.width_max}},
         {"noise_sigma", c.noise_sigma},
         {"contrast", c.contrast},
         {"classes", c.classes},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
    json_detail::reject_unknown(j, {"kind", "count", "size", "shapes", "width", "noise_sigma", "contrast", "classes", "seed"},
                                "dataset");
    std::string kind = to_string(c.kind);
    json_detail::read(j, "kind", kind);
    c.kind = parse_kind(kind);
    json_detail::read(j, "count", c.count);
    json_detail::read(j, "size", c.size);
    std::array<int, 2> shapes{c.shapes_min, c.shapes_max};
    std::array<int, 2> width{c.width_min, c.width_max};
    json_detail::read(j, "shapes", shapes);
    json_detail::read(j, "width", width);
    c.shapes_min = shapes[0];
    c.shapes_max = shapes[1];
    c.width_min = width[0];
    c.width_max = width[1];
    json_detail::read(j, "noise_sigma", c.noise_sigma);
    json_detail::read(j, "contrast", c.contrast);
    json_detail::read(j, "classes", c.classes);
    json_detail::read(j, "seed", c.seed);
}

}  // namespace synth

namespace trainer {

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate},
         {"epochs", c.epochs},
         {"alpha", c.loss.alpha},
         {"epsilon", c.loss.epsilon},
         {"include_background", c.loss.include_background},
         {"use_dice", c.loss.use_dice},
         {"use_cce", c.loss.use_cce},
         {"use_ts", c.use_ts},
         {"se", c.se.to_string()}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    json_detail::reject_unknown(j, {"learning_rate", "epochs", "alpha", "epsilon", "include_background", "use_dice",
                                    "use_cce", "use_ts", "se", "seed"},
                                "train");
    json_detail::read(j, "learning_rate", c.learning_rate);
    json_detail::read(j, "epochs", c.epochs);
    json_detail::read(j, "alpha", c.loss.alpha);
    json_detail::read(j, "epsilon", c.loss.epsilon);
    json_detail::read(j, "include_background", c.loss.include_background);
    json_detail::read(j, "use_dice", c.loss.use_dice);
    json_detail::read(j, "use_cce", c.loss.use_cce);
    json_detail::read(j, "use_ts", c.use_ts);
    json_detail::read(j, "seed", c.seed);
    if (j.contains("se")) c.se = raster::parse_se(j.at("se").get<std::string>());
}

}  // namespace trainer

namespace experiment {

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = {{"name", c.name},
         {"dataset", c.dataset},
         {"train_fraction", c.train_fraction},
         {"arms", c.arms},
         {"seeds", c.seeds},
         {"baseline", c.baseline_arm()},
         {"threshold", c.threshold},
         {"train", c.train}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    json_detail::reject_unknown(j, {"name", "dataset", "train_fraction", "arms", "seeds", "baseline", "threshold", "train"},
                                "experiment");
    json_detail::read(j, "name", c.name);
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<synth::SynthConfig>();
    json_detail::read(j, "train_fraction", c.train_fraction);
    json_detail::read(j, "arms", c.arms);
    json_detail::read(j, "seeds", c.seeds);
    json_detail::read(j, "baseline", c.baseline);
    json_detail::read(j, "threshold", c.threshold);
    if (j.contains("train")) c.train = j.at("train").get<trainer::TrainConfig>();
}

}  // namespace experiment

}  // namespace skelloss
