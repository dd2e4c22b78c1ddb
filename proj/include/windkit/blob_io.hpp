#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "windkit/errors.hpp"
#include "windkit/field.hpp"

namespace windkit {

namespace detail {

inline std::filesystem::path sidecar_path(const std::filesystem::path& payload) {
    std::filesystem::path p = payload;
    p.replace_extension(".json");
    return p;
}

inline void write_f32_le(std::ofstream& os, const std::vector<double>& values) {
    std::vector<std::uint32_t> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        float f = static_cast<float>(values[i]);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        if constexpr (std::endian::native == std::endian::big)
            u = __builtin_bswap32(u);
        buf[i] = u;
    }
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * 4));
}

}  // namespace detail

inline nlohmann::json channels_to_json(const std::vector<ChannelSpec>& channels) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : channels) {
        nlohmann::json j;
        j["name"] = c.name;
        j["kind"] = to_string(c.kind);
        if (c.level_hpa)
            j["level"] = *c.level_hpa;
        else
            j["level"] = nullptr;
        j["transform"] = to_string(c.transform);
        arr.push_back(std::move(j));
    }
    return arr;
}

inline std::vector<ChannelSpec> channels_from_json(const nlohmann::json& arr) {
    std::vector<ChannelSpec> out;
    for (const auto& j : arr) {
        ChannelSpec c;
        c.name = j.at("name").get<std::string>();
        c.kind = channel_kind_from_string(j.at("kind").get<std::string>());
        if (j.contains("level") && !j.at("level").is_null())
            c.level_hpa = j.at("level").get<double>();
        c.transform = transform_from_string(j.at("transform").get<std::string>());
        out.push_back(std::move(c));
    }
    return out;
}

/// Write a sequence as raw little-endian float32 in time,channel,lat,lon
/// order plus a JSON sidecar (same basename, extension .json).
inline void write_blob(const FieldSequence& seq, const std::filesystem::path& path,
                       const std::string& stats_ref = "") {
    seq.validate();
    std::ofstream payload(path, std::ios::binary | std::ios::trunc);
    if (!payload)
        throw DataError("write_blob: cannot open '" + path.string() + "' for writing");
    detail::write_f32_le(payload, seq.values);
    payload.close();
    if (!payload)
        throw DataError("write_blob: short write to '" + path.string() + "'");

    nlohmann::json side;
    side["shape"] = {seq.frames, seq.n_channels(), seq.n_lat(), seq.n_lon()};
    side["dims"] = {"time", "channel", "lat", "lon"};
    side["channels"] = channels_to_json(seq.channels);
    side["lat"] = seq.grid.lat;
    side["lon"] = seq.grid.lon;
    side["stride_hours"] = seq.stride_hours;
    side["stats_ref"] = stats_ref;

    std::ofstream sc(detail::sidecar_path(path), std::ios::trunc);
    if (!sc)
        throw DataError("write_blob: cannot open sidecar for '" + path.string() + "'");
    sc << side.dump(2) << "\n";
}

/// Read back a blob written by write_blob. Payload/sidecar mismatches raise
/// DataError naming the discrepant field.
inline FieldSequence read_blob(const std::filesystem::path& path) {
    const auto side_path = detail::sidecar_path(path);
    std::ifstream sc(side_path);
    if (!sc)
        throw DataError("read_blob: missing sidecar '" + side_path.string() + "'");
    nlohmann::json side;
    try {
        sc >> side;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("read_blob: malformed sidecar '" + side_path.string() + "': " + e.what());
    }

    FieldSequence seq;
    try {
        const auto shape = side.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 4)
            throw DataError("read_blob: sidecar shape must have 4 entries");
        seq.frames = shape[0];
        seq.channels = channels_from_json(side.at("channels"));
        seq.grid.lat = side.at("lat").get<std::vector<double>>();
        seq.grid.lon = side.at("lon").get<std::vector<double>>();
        seq.stride_hours = side.at("stride_hours").get<double>();
        if (seq.n_channels() != shape[1])
            throw DataError("read_blob: channel count mismatch: shape declares " +
                            std::to_string(shape[1]) + ", channels list has " +
                            std::to_string(seq.n_channels()));
        if (seq.n_lat() != shape[2] || seq.n_lon() != shape[3])
            throw DataError("read_blob: grid size mismatch between shape and lat/lon arrays");
    } catch (const nlohmann::json::exception& e) {
        throw DataError("read_blob: sidecar '" + side_path.string() +
                        "' missing or mistyped field: " + e.what());
    }

    std::ifstream payload(path, std::ios::binary);
    if (!payload)
        throw DataError("read_blob: missing payload '" + path.string() + "'");
    payload.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(payload.tellg());
    payload.seekg(0);
    if (bytes == 0 || bytes % 4 != 0)
        throw DataError("read_blob: truncated blob '" + path.string() + "' (" +
                        std::to_string(bytes) + " bytes)");
    const std::size_t n_floats = bytes / 4;
    const std::size_t per_frame = seq.frame_size();
    if (per_frame == 0 || n_floats % per_frame != 0)
        throw DataError("read_blob: payload size mismatch: " + std::to_string(n_floats) +
                        " values are not a whole number of " + std::to_string(per_frame) +
                        "-value frames");
    if (n_floats / per_frame != seq.frames)
        throw DataError("read_blob: frame count mismatch: sidecar declares " +
                        std::to_string(seq.frames) + " frames, payload holds " +
                        std::to_string(n_floats / per_frame));

    std::vector<std::uint32_t> buf(n_floats);
    payload.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!payload)
        throw DataError("read_blob: short read from '" + path.string() + "'");
    seq.values.resize(n_floats);
    for (std::size_t i = 0; i < n_floats; ++i) {
        std::uint32_t u = buf[i];
        if constexpr (std::endian::native == std::endian::big)
            u = __builtin_bswap32(u);
        float f;
        std::memcpy(&f, &u, 4);
        seq.values[i] = static_cast<double>(f);
    }
    seq.validate();
    return seq;
}

}  // namespace windkit
