#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "windkit/blob_io.hpp"
#include "windkit/conv_denoiser.hpp"
#include "windkit/errors.hpp"
#include "windkit/grid.hpp"

namespace windkit {

namespace detail {

inline void write_f32_payload(const std::filesystem::path& path,
                              const std::vector<double>& values) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot open '" + path.string() + "'");
    write_f32_le(os, values);
    if (!os) throw DataError("checkpoint: short write to '" + path.string() + "'");
}

inline std::vector<double> read_f32_payload(const std::filesystem::path& path,
                                            std::size_t expected) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: missing payload '" + path.string() + "'");
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(is.tellg());
    is.seekg(0);
    if (bytes != expected * 4)
        throw DataError("checkpoint: payload '" + path.string() + "' holds " +
                        std::to_string(bytes / 4) + " values, manifest expects " +
                        std::to_string(expected));
    std::vector<std::uint32_t> buf(expected);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!is) throw DataError("checkpoint: short read from '" + path.string() + "'");
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint32_t u = buf[i];
        if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
        float f;
        std::memcpy(&f, &u, 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

inline std::string layer_name(std::size_t index, std::size_t count) {
    if (index == 0) return "stem";
    if (index + 1 == count) return "bypass";
    if (index + 2 == count) return "head";
    const std::size_t s = (index - 1) / 2;
    return "stage" + std::to_string(s) + (((index - 1) % 2) == 0 ? ".a" : ".b");
}

}  // namespace detail

struct Checkpoint {
    std::unique_ptr<ConvDenoiser> model;
    std::vector<double> ema_params;
    std::vector<ChannelSpec> channels;
    std::string stats_ref;
    std::uint64_t seed = 0;
};

/// JSON manifest (layer shapes, seed, config) plus raw little-endian float32
/// payloads, one value block per layer concatenated in manifest order.
/// Weights and EMA weights are separate payload files next to the manifest.
inline void save_checkpoint(const std::filesystem::path& manifest_path, const ConvDenoiser& net,
                            const std::vector<double>& ema_params,
                            const std::vector<ChannelSpec>& channels,
                            const std::string& stats_ref, std::uint64_t seed) {
    if (ema_params.size() != net.n_params())
        throw DataError("save_checkpoint: EMA parameter count mismatch");
    const auto& cfg = net.config();
    nlohmann::json j;
    j["format"] = "windkit-checkpoint-v1";
    j["seed"] = seed;
    j["stats_ref"] = stats_ref;
    j["model"] = {{"frames", cfg.frames},       {"channels", cfg.channels},
                  {"n_lat", cfg.n_lat},         {"n_lon", cfg.n_lon},
                  {"width", cfg.width},         {"stages", cfg.stages},
                  {"append_noise_channels", cfg.append_noise_channels},
                  {"init_seed", cfg.init_seed}};
    j["grid"] = {{"lat", net.grid().lat}, {"lon", net.grid().lon}};
    j["data_channels"] = channels_to_json(channels);

    nlohmann::json layers = nlohmann::json::array();
    const auto& ls = net.layers();
    for (std::size_t i = 0; i < ls.size(); ++i) {
        nlohmann::json lj;
        lj["name"] = detail::layer_name(i, ls.size());
        lj["weight_shape"] = {ls[i].c_out, ls[i].c_in, 3, 3};
        lj["bias_shape"] = {ls[i].c_out};
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);

    std::filesystem::path weights = manifest_path;
    weights.replace_extension(".bin");
    std::filesystem::path ema = manifest_path;
    ema.replace_extension(".ema.bin");
    j["payload"] = weights.filename().string();
    j["payload_ema"] = ema.filename().string();

    std::ofstream os(manifest_path, std::ios::trunc);
    if (!os) throw DataError("save_checkpoint: cannot open '" + manifest_path.string() + "'");
    os << j.dump(2) << "\n";
    detail::write_f32_payload(weights, net.params());
    detail::write_f32_payload(ema, ema_params);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw DataError("load_checkpoint: missing manifest '" + manifest_path.string() + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_checkpoint: malformed manifest: " + std::string(e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != "windkit-checkpoint-v1")
            throw DataError("load_checkpoint: unknown format '" +
                            j.at("format").get<std::string>() + "'");
        ConvNetConfig cfg;
        const auto& m = j.at("model");
        cfg.frames = m.at("frames").get<std::size_t>();
        cfg.channels = m.at("channels").get<std::size_t>();
        cfg.n_lat = m.at("n_lat").get<std::size_t>();
        cfg.n_lon = m.at("n_lon").get<std::size_t>();
        cfg.width = m.at("width").get<std::size_t>();
        cfg.stages = m.at("stages").get<std::size_t>();
        cfg.append_noise_channels = m.at("append_noise_channels").get<bool>();
        cfg.init_seed = m.at("init_seed").get<std::uint64_t>();
        GridSpec grid;
        grid.lat = j.at("grid").at("lat").get<std::vector<double>>();
        grid.lon = j.at("grid").at("lon").get<std::vector<double>>();

        Checkpoint ck;
        ck.model = std::make_unique<ConvDenoiser>(cfg, grid);
        ck.channels = channels_from_json(j.at("data_channels"));
        ck.stats_ref = j.at("stats_ref").get<std::string>();
        ck.seed = j.at("seed").get<std::uint64_t>();

        const auto dir = manifest_path.parent_path();
        ck.model->params() =
            detail::read_f32_payload(dir / j.at("payload").get<std::string>(),
                                     ck.model->n_params());
        ck.ema_params = detail::read_f32_payload(dir / j.at("payload_ema").get<std::string>(),
                                                 ck.model->n_params());
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_checkpoint: manifest missing field: " + std::string(e.what()));
    }
}

}  // namespace windkit
