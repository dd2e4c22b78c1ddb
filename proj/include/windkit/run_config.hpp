#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "windkit/datagen.hpp"
#include "windkit/errors.hpp"
#include "windkit/guidance.hpp"
#include "windkit/rng.hpp"
#include "windkit/sampler.hpp"
#include "windkit/training.hpp"

namespace windkit {

/// Resolved run configuration: nested sections with full schema validation.
/// Unknown keys are rejected before any work happens.
struct RunConfig {
    // data
    WorldConfig world;
    std::size_t frames = 400;
    // model
    std::size_t model_width = 32;
    std::size_t model_stages = 3;
    std::size_t model_frames = 5;
    bool append_noise_channels = false;
    // train
    TrainConfig train;
    // sampler
    SamplerConfig sampler;
    // guidance
    GuidanceConfig guidance;
    // task
    std::size_t members = 4;
    std::size_t windows = 1;
    std::size_t context_frames = 1;
    std::size_t factor = 4;
    std::size_t t_agg = 4;
    double mask_density = 0.1;
    std::string mask_path;
    std::string dam_target = "auto";
    double delta_t = 2.0;
    double q_scale = 1.1449;  // 1.07^2 per Clausius-Clapeyron at +2K
    std::string split = "test";
    // output
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
};

namespace cfgdet {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                           const std::string& section) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in section '" + section +
                              "'");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config: key '") + key + "' has the wrong type");
    }
}

}  // namespace cfgdet

inline nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["data"] = {{"n_lat", world.n_lat},
                 {"n_lon", world.n_lon},
                 {"preset", world.preset == WorldConfig::Preset::dam9 ? "dam9" : "standard6"},
                 {"advection_speed", world.advection_speed},
                 {"diffusivity", world.diffusivity},
                 {"forcing_amplitude", world.forcing_amplitude},
                 {"stride_hours", world.stride_hours},
                 {"frames", frames}};
    j["model"] = {{"width", model_width},
                  {"stages", model_stages},
                  {"frames", model_frames},
                  {"append_noise_channels", append_noise_channels}};
    j["train"] = {{"epochs", train.epochs},
                  {"max_steps", train.max_steps},
                  {"batch_size", train.batch_size},
                  {"peak_lr", train.peak_lr},
                  {"warmup_fraction", train.warmup_fraction},
                  {"lr_floor", train.lr_floor},
                  {"clip_norm", train.clip_norm},
                  {"ema_decay", train.ema_decay},
                  {"channel_weights", train.channel_weights}};
    j["sampler"] = {{"n_steps", sampler.n_steps}, {"eta", sampler.eta}};
    j["guidance"] = {{"method", to_string(guidance.method)},
                     {"cg_iters", guidance.cg_iters},
                     {"delta_sq", guidance.delta_sq},
                     {"cg_tol", guidance.cg_tol},
                     {"strength", guidance.strength},
                     {"residual_weights", guidance.residual_weights}};
    j["task"] = {{"members", members},
                 {"windows", windows},
                 {"context_frames", context_frames},
                 {"factor", factor},
                 {"t_agg", t_agg},
                 {"mask_density", mask_density},
                 {"mask_path", mask_path},
                 {"dam_target", dam_target},
                 {"delta_t", delta_t},
                 {"q_scale", q_scale},
                 {"split", split}};
    j["output"] = {{"seed", seed}};
    return j;
}

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
    using cfgdet::read;
    RunConfig c;
    cfgdet::reject_unknown(
        j, {"data", "model", "train", "sampler", "guidance", "task", "output"}, "<root>");
    if (j.contains("data")) {
        const auto& d = j.at("data");
        cfgdet::reject_unknown(d,
                               {"n_lat", "n_lon", "preset", "advection_speed", "diffusivity",
                                "forcing_amplitude", "stride_hours", "frames"},
                               "data");
        read(d, "n_lat", c.world.n_lat);
        read(d, "n_lon", c.world.n_lon);
        std::string preset = "standard6";
        read(d, "preset", preset);
        if (preset == "standard6")
            c.world.preset = WorldConfig::Preset::standard6;
        else if (preset == "dam9")
            c.world.preset = WorldConfig::Preset::dam9;
        else
            throw ConfigError("config: data.preset must be 'standard6' or 'dam9'");
        read(d, "advection_speed", c.world.advection_speed);
        read(d, "diffusivity", c.world.diffusivity);
        read(d, "forcing_amplitude", c.world.forcing_amplitude);
        read(d, "stride_hours", c.world.stride_hours);
        read(d, "frames", c.frames);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        cfgdet::reject_unknown(m, {"width", "stages", "frames", "append_noise_channels"},
                               "model");
        read(m, "width", c.model_width);
        read(m, "stages", c.model_stages);
        read(m, "frames", c.model_frames);
        read(m, "append_noise_channels", c.append_noise_channels);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        cfgdet::reject_unknown(t,
                               {"epochs", "max_steps", "batch_size", "peak_lr",
                                "warmup_fraction", "lr_floor", "clip_norm", "ema_decay",
                                "channel_weights"},
                               "train");
        read(t, "epochs", c.train.epochs);
        read(t, "max_steps", c.train.max_steps);
        read(t, "batch_size", c.train.batch_size);
        read(t, "peak_lr", c.train.peak_lr);
        read(t, "warmup_fraction", c.train.warmup_fraction);
        read(t, "lr_floor", c.train.lr_floor);
        read(t, "clip_norm", c.train.clip_norm);
        read(t, "ema_decay", c.train.ema_decay);
        read(t, "channel_weights", c.train.channel_weights);
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        cfgdet::reject_unknown(s, {"n_steps", "eta"}, "sampler");
        read(s, "n_steps", c.sampler.n_steps);
        read(s, "eta", c.sampler.eta);
    }
    if (j.contains("guidance")) {
        const auto& g = j.at("guidance");
        cfgdet::reject_unknown(
            g, {"method", "cg_iters", "delta_sq", "cg_tol", "strength", "residual_weights"},
            "guidance");
        std::string method = to_string(c.guidance.method);
        read(g, "method", method);
        c.guidance.method = guidance_method_from_string(method);
        read(g, "cg_iters", c.guidance.cg_iters);
        read(g, "delta_sq", c.guidance.delta_sq);
        read(g, "cg_tol", c.guidance.cg_tol);
        read(g, "strength", c.guidance.strength);
        read(g, "residual_weights", c.guidance.residual_weights);
    }
    if (j.contains("task")) {
        const auto& t = j.at("task");
        cfgdet::reject_unknown(t,
                               {"members", "windows", "context_frames", "factor", "t_agg",
                                "mask_density", "mask_path", "dam_target", "delta_t", "q_scale",
                                "split"},
                               "task");
        read(t, "members", c.members);
        read(t, "windows", c.windows);
        read(t, "context_frames", c.context_frames);
        read(t, "factor", c.factor);
        read(t, "t_agg", c.t_agg);
        read(t, "mask_density", c.mask_density);
        read(t, "mask_path", c.mask_path);
        read(t, "dam_target", c.dam_target);
        read(t, "delta_t", c.delta_t);
        read(t, "q_scale", c.q_scale);
        read(t, "split", c.split);
    }
    if (j.contains("output")) {
        const auto& o = j.at("output");
        cfgdet::reject_unknown(o, {"seed"}, "output");
        read(o, "seed", c.seed);
    }
    c.world.validate();
    c.train.validate();
    c.guidance.validate();
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: malformed JSON in '" + path.string() + "': " + e.what());
    }
    return RunConfig::from_json(j);
}

/// FNV-1a over the canonical dump; embedded in every output for rerun checks.
inline std::string config_hash(const nlohmann::json& j) {
    const std::string dump = j.dump();
    std::uint64_t h = detail::fnv1a(dump);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace windkit
