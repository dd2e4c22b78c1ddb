// windkit command-line front end: generate data, train, run the guided
// inference tasks, and evaluate outputs. All subcommands are deterministic
// given an identical config and seed.

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "windkit/blob_io.hpp"
#include "windkit/checkpoint.hpp"
#include "windkit/datagen.hpp"
#include "windkit/guidance.hpp"
#include "windkit/metrics.hpp"
#include "windkit/physics.hpp"
#include "windkit/run_config.hpp"
#include "windkit/sampler.hpp"
#include "windkit/training.hpp"
#include "windkit/transforms.hpp"

namespace fs = std::filesystem;
using namespace windkit;

namespace {

std::size_t thread_budget(std::size_t jobs) {
    std::size_t cap = std::thread::hardware_concurrency();
    if (cap == 0) cap = 1;
    if (const char* env = std::getenv("WIND_KIT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) cap = static_cast<std::size_t>(v);
    }
    return std::min(cap, std::max<std::size_t>(jobs, 1));
}

/// Fan member indices out across worker threads; results land in a
/// preallocated slot per member so the output order is deterministic.
template <typename Fn>
void for_each_member(std::size_t count, Fn&& fn) {
    const std::size_t workers = thread_budget(count);
    if (workers <= 1) {
        for (std::size_t m = 0; m < count; ++m) fn(m);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t m = next.fetch_add(1); m < count; m = next.fetch_add(1)) fn(m);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg) {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = cfg.to_json();
    j["config_hash"] = config_hash(cfg.to_json());
    j["seed"] = cfg.seed;
    std::ofstream os(dir / "run_manifest.json", std::ios::trunc);
    if (!os) throw DataError("cannot write run_manifest.json in '" + dir.string() + "'");
    os << j.dump(2) << "\n";
}

struct Dataset {
    FieldSequence train_phys, val_phys, test_phys;
    NormStats stats;
    std::vector<double> orography;
};

Dataset load_dataset(const fs::path& dir) {
    Dataset d;
    d.train_phys = read_blob(dir / "train.bin");
    d.val_phys = read_blob(dir / "val.bin");
    d.test_phys = read_blob(dir / "test.bin");
    std::ifstream is(dir / "stats.json");
    if (!is) throw DataError("missing stats.json in '" + dir.string() + "'");
    nlohmann::json j;
    is >> j;
    d.stats = NormStats::from_json(j.at("channels"));
    if (fs::exists(dir / "orography.bin")) {
        const FieldSequence oro = read_blob(dir / "orography.bin");
        d.orography = std::vector<double>(oro.values.begin(), oro.values.end());
    }
    return d;
}

/// Evenly spaced window starts covering a split.
std::vector<std::size_t> window_starts(std::size_t split_frames, std::size_t window,
                                       std::size_t count) {
    if (split_frames < window)
        throw DataError("split holds " + std::to_string(split_frames) +
                        " frames, need at least " + std::to_string(window));
    const std::size_t max_start = split_frames - window;
    std::vector<std::size_t> starts;
    const std::size_t n = std::min(count, max_start + 1);
    for (std::size_t i = 0; i < n; ++i)
        starts.push_back(n == 1 ? 0 : i * max_start / (n - 1));
    return starts;
}

ConvNetConfig model_config(const RunConfig& cfg, const FieldSequence& data) {
    ConvNetConfig mc;
    mc.frames = cfg.model_frames;
    mc.channels = data.n_channels();
    mc.n_lat = data.n_lat();
    mc.n_lon = data.n_lon();
    mc.width = cfg.model_width;
    mc.stages = cfg.model_stages;
    mc.append_noise_channels = cfg.append_noise_channels;
    mc.init_seed = cfg.seed;
    return mc;
}

std::vector<double> noisy_observation(std::vector<double> clean, double delta_sq,
                                      RandomStream& rng) {
    const double sd = std::sqrt(delta_sq);
    for (double& v : clean) v += sd * rng.normal();
    return clean;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    const FieldSequence all = generate(cfg.world, cfg.frames);
    const SplitSpec split = SplitSpec::fractions(cfg.frames);
    const FieldSequence train = all.window(0, split.train_end);
    const FieldSequence val = all.window(split.train_end, split.val_end - split.train_end);
    const FieldSequence test = all.window(split.val_end, cfg.frames - split.val_end);
    const NormStats stats = compute_norm_stats(train);

    write_blob(train, out / "train.bin", "stats.json");
    write_blob(val, out / "val.bin", "stats.json");
    write_blob(test, out / "test.bin", "stats.json");

    FieldSequence oro = FieldSequence::zeros(
        all.grid, {{"phi_sfc", ChannelKind::geopotential, std::nullopt, Transform::none}}, 1,
        all.stride_hours);
    const auto phi = orography_geopotential(all.grid);
    std::copy(phi.begin(), phi.end(), oro.values.begin());
    write_blob(oro, out / "orography.bin", "stats.json");

    nlohmann::json sj;
    sj["channels"] = stats.to_json(all.channels);
    sj["splits"] = {{"train", {std::size_t{0}, split.train_end}},
                    {"val", {split.train_end, split.val_end}},
                    {"test", {split.val_end, cfg.frames}}};
    sj["config_hash"] = config_hash(cfg.to_json());
    sj["seed"] = cfg.seed;
    std::ofstream os(out / "stats.json", std::ios::trunc);
    os << sj.dump(2) << "\n";

    write_manifest(out, "gen-data", cfg);
    std::cout << "gen-data: " << cfg.frames << " frames on " << cfg.world.n_lat << "x"
              << cfg.world.n_lon << " -> " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out) {
    fs::create_directories(out);
    const Dataset ds = load_dataset(data_dir);
    const FieldSequence train_n = normalize(ds.train_phys, ds.stats);

    ConvDenoiser net(model_config(cfg, train_n), train_n.grid);
    WindowDataset windows(train_n, cfg.model_frames);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const TrainResult result = train(net, windows, tc);

    save_checkpoint(out / "checkpoint.json", net, result.ema_params, train_n.channels,
                    "stats.json", cfg.seed);
    {
        std::ofstream os(out / "loss_curve.csv", std::ios::trunc);
        os << "step,loss,lr\n";
        os.precision(12);
        for (std::size_t s = 0; s < result.loss_curve.size(); ++s)
            os << s << "," << result.loss_curve[s] << "," << lr_at(s, result.steps, tc) << "\n";
    }
    write_manifest(out, "train", cfg);
    std::cout << "train: " << result.steps << " steps, final loss "
              << result.loss_curve.back() << " -> " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// shared inference plumbing

struct InferenceContext {
    Checkpoint ckpt;
    Dataset data;
    FieldSequence split_phys;  // evaluation split in physical units
    FieldSequence split_norm;  // same, normalized
    std::vector<double> area;
};

InferenceContext load_inference(const RunConfig& cfg, const fs::path& ckpt_path,
                                const fs::path& data_dir, bool use_ema = true) {
    InferenceContext ic;
    ic.ckpt = load_checkpoint(ckpt_path);
    if (use_ema) ic.ckpt.model->params() = ic.ckpt.ema_params;
    ic.data = load_dataset(data_dir);
    const FieldSequence* split = &ic.data.test_phys;
    if (cfg.split == "val")
        split = &ic.data.val_phys;
    else if (cfg.split == "train")
        split = &ic.data.train_phys;
    else if (cfg.split != "test")
        throw ConfigError("task.split must be train, val or test");
    ic.split_phys = *split;
    ic.split_norm = normalize(ic.split_phys, ic.data.stats);
    ic.area = area_weights(ic.split_phys.grid);
    return ic;
}

void write_members(const fs::path& out, const std::string& prefix,
                   const std::vector<FieldSequence>& members_phys) {
    for (std::size_t m = 0; m < members_phys.size(); ++m) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%03zu.bin", prefix.c_str(), m);
        write_blob(members_phys[m], out / name, "stats.json");
    }
}

void append_ensemble_metrics(MetricReport& report, const EnsembleSet& ens,
                             const FieldSequence& truth, std::span<const double> area) {
    for (std::size_t t = 0; t < truth.frames; ++t) {
        const double lead = truth.stride_hours * static_cast<double>(t);
        for (std::size_t c = 0; c < truth.n_channels(); ++c) {
            std::vector<std::span<const double>> fields;
            for (const auto& m : ens.members) fields.push_back(m.frame_channel(t, c));
            const auto tf = truth.frame_channel(t, c);
            report.add(truth.channels[c].name, lead, "crps", crps(fields, tf, area));
            report.add(truth.channels[c].name, lead, "spread", spread(fields, area));
            report.add(truth.channels[c].name, lead, "skill", skill(fields, tf, area));
            const double r = ssr(fields, tf, area);
            if (std::isfinite(r)) report.add(truth.channels[c].name, lead, "ssr", r);
        }
    }
}

// ---------------------------------------------------------------------------
// forecast

int cmd_forecast(const RunConfig& cfg, const fs::path& ckpt_path, const fs::path& data_dir,
                 const fs::path& out) {
    fs::create_directories(out);
    InferenceContext ic = load_inference(cfg, ckpt_path, data_dir);
    const std::size_t t_model = ic.ckpt.model->config().frames;
    const auto starts = window_starts(ic.split_norm.frames, t_model, cfg.windows);
    SeedPolicy seeds{cfg.seed};

    MetricReport report;
    report.config_hash = config_hash(cfg.to_json());
    report.seed = cfg.seed;

    std::vector<FieldSequence> first_window_members;
    const SamplerConfig scfg = cfg.sampler;
    for (std::size_t wi = 0; wi < starts.size(); ++wi) {
        const FieldSequence truth_n = ic.split_norm.window(starts[wi], t_model);
        const FieldSequence context = truth_n.window(0, cfg.context_frames);
        std::vector<FieldSequence> members(cfg.members);
        for_each_member(cfg.members, [&](std::size_t m) {
            RandomStream rng = seeds.stream("forecast", wi * 100000 + m);
            members[m] = forecast(*ic.ckpt.model, scfg, context, t_model, rng);
        });
        EnsembleSet ens{std::move(members)};
        ens.validate();
        append_ensemble_metrics(report, ens, truth_n, ic.area);
        if (wi == 0)
            for (const auto& m : ens.members)
                first_window_members.push_back(denormalize(m, ic.data.stats));
    }
    write_members(out, "member", first_window_members);
    {
        std::ofstream os(out / "metrics.csv", std::ios::trunc);
        report.write_csv(os);
        std::ofstream pv(out / "metrics_provenance.json", std::ios::trunc);
        pv << report.provenance().dump(2) << "\n";
    }
    write_manifest(out, "forecast", cfg);
    std::cout << "forecast: " << starts.size() << " windows x " << cfg.members
              << " members -> " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// guided tasks

void write_psd_csv(const fs::path& path, const FieldSequence& truth_phys,
                   const FieldSequence& pred_phys, std::span<const double> area) {
    std::ofstream os(path, std::ios::trunc);
    os << "channel,wavenumber,truth_power,pred_power\n";
    os.precision(12);
    for (std::size_t c = 0; c < truth_phys.n_channels(); ++c) {
        const auto pt = zonal_psd(truth_phys.frame_channel(0, c), truth_phys.grid, area);
        const auto pp = zonal_psd(pred_phys.frame_channel(0, c), pred_phys.grid, area);
        for (std::size_t k = 0; k < pt.size(); ++k)
            os << truth_phys.channels[c].name << "," << k << "," << pt[k] << "," << pp[k]
               << "\n";
    }
}

int cmd_downscale_spatial(const RunConfig& cfg, const fs::path& ckpt_path,
                          const fs::path& data_dir, const fs::path& out) {
    fs::create_directories(out);
    InferenceContext ic = load_inference(cfg, ckpt_path, data_dir);
    const std::size_t t_model = ic.ckpt.model->config().frames;
    const FieldSequence truth_n = ic.split_norm.window(0, t_model);
    SeedPolicy seeds{cfg.seed};

    const ForwardOperator op = avgpool_spatial(cfg.factor, truth_n);
    RandomStream obs_rng = seeds.stream("observation");
    const std::vector<double> y =
        noisy_observation(op.apply(truth_n), cfg.guidance.delta_sq, obs_rng);

    {
        GridSpec coarse;
        for (std::size_t i = 0; i < truth_n.n_lat(); i += cfg.factor)
            coarse.lat.push_back(truth_n.grid.lat[i]);
        for (std::size_t j = 0; j < truth_n.n_lon(); j += cfg.factor)
            coarse.lon.push_back(truth_n.grid.lon[j]);
        FieldSequence yn =
            FieldSequence::zeros(coarse, truth_n.channels, t_model, truth_n.stride_hours);
        std::copy(y.begin(), y.end(), yn.values.begin());
        write_blob(denormalize(yn, ic.data.stats), out / "coarse_input.bin", "stats.json");
    }

    const GuidedDenoise hook = make_guidance_hook(*ic.ckpt.model, op, y, cfg.guidance);
    std::vector<FieldSequence> members(cfg.members);
    for_each_member(cfg.members, [&](std::size_t m) {
        RandomStream rng = seeds.stream("member", m);
        FieldSequence z = gaussian_like(truth_n, rng);
        members[m] = sample(*ic.ckpt.model, cfg.sampler, z, rng, {}, hook);
    });

    MetricReport report;
    report.config_hash = config_hash(cfg.to_json());
    report.seed = cfg.seed;
    EnsembleSet ens{members};
    const FieldSequence mean_n = ens.mean();
    for (std::size_t c = 0; c < truth_n.n_channels(); ++c)
        for (std::size_t t = 0; t < t_model; ++t)
            report.add(truth_n.channels[c].name,
                       truth_n.stride_hours * static_cast<double>(t), "rmse_mean",
                       rmse_weighted(mean_n.frame_channel(t, c), truth_n.frame_channel(t, c),
                                     ic.area));
    {
        double sxy = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
        const auto ay = op.apply(members[0]);
        for (std::size_t i = 0; i < ay.size(); ++i) {
            sxy += ay[i] * y[i];
            sx += ay[i];
            sy += y[i];
            sxx += ay[i] * ay[i];
            syy += y[i] * y[i];
        }
        const double n = static_cast<double>(ay.size());
        const double r =
            (sxy - sx * sy / n) / std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
        report.add("all", 0.0, "repool_pearson_r", r);
    }
    std::vector<FieldSequence> members_phys;
    for (const auto& m : members) members_phys.push_back(denormalize(m, ic.data.stats));
    write_members(out, "member", members_phys);
    write_psd_csv(out / "psd.csv", ic.split_phys.window(0, t_model), members_phys[0], ic.area);
    {
        std::ofstream os(out / "metrics.csv", std::ios::trunc);
        report.write_csv(os);
    }
    write_manifest(out, "downscale-spatial", cfg);
    std::cout << "downscale-spatial: factor " << cfg.factor << ", " << cfg.members
              << " members -> " << out.string() << "\n";
    return 0;
}

int cmd_downscale_temporal(const RunConfig& cfg, const fs::path& ckpt_path,
                           const fs::path& data_dir, const fs::path& out) {
    fs::create_directories(out);
    InferenceContext ic = load_inference(cfg, ckpt_path, data_dir);
    const std::size_t t_model = ic.ckpt.model->config().frames;
    const FieldSequence truth_n = ic.split_norm.window(0, t_model);
    SeedPolicy seeds{cfg.seed};

    const ForwardOperator op = temporal_mean(cfg.t_agg, truth_n);
    RandomStream obs_rng = seeds.stream("observation");
    const std::vector<double> y =
        noisy_observation(op.apply(truth_n), cfg.guidance.delta_sq, obs_rng);
    {
        FieldSequence yn =
            FieldSequence::zeros(truth_n.grid, truth_n.channels, 1, truth_n.stride_hours);
        std::copy(y.begin(), y.end(), yn.values.begin());
        write_blob(denormalize(yn, ic.data.stats), out / "aggregated_input.bin", "stats.json");
    }

    const GuidedDenoise hook = make_guidance_hook(*ic.ckpt.model, op, y, cfg.guidance);
    RandomStream rng = seeds.stream("member", 0);
    FieldSequence z = gaussian_like(truth_n, rng);
    const FieldSequence gen = sample(*ic.ckpt.model, cfg.sampler, z, rng, {}, hook);

    {
        const auto ay = op.apply(gen);
        std::ofstream os(out / "consistency.csv", std::ios::trunc);
        os << "channel,residual_rms,observation_rms\n";
        os.precision(12);
        const std::size_t px = truth_n.pixels();
        for (std::size_t c = 0; c < truth_n.n_channels(); ++c) {
            double rr = 0.0, yy = 0.0;
            for (std::size_t p = 0; p < px; ++p) {
                const double d = ay[c * px + p] - y[c * px + p];
                rr += d * d;
                yy += y[c * px + p] * y[c * px + p];
            }
            os << truth_n.channels[c].name << "," << std::sqrt(rr / static_cast<double>(px))
               << "," << std::sqrt(yy / static_cast<double>(px)) << "\n";
        }
    }
    write_blob(denormalize(gen, ic.data.stats), out / "generated.bin", "stats.json");
    write_manifest(out, "downscale-temporal", cfg);
    std::cout << "downscale-temporal: agg " << cfg.t_agg << " -> " << out.string() << "\n";
    return 0;
}

int cmd_reconstruct(const RunConfig& cfg, const fs::path& ckpt_path, const fs::path& data_dir,
                    const fs::path& out) {
    fs::create_directories(out);
    InferenceContext ic = load_inference(cfg, ckpt_path, data_dir);
    const std::size_t t_model = ic.ckpt.model->config().frames;
    const FieldSequence truth_n = ic.split_norm.window(0, t_model);
    SeedPolicy seeds{cfg.seed};

    MaskSpec mask;
    if (!cfg.mask_path.empty()) {
        const FieldSequence mf = read_blob(cfg.mask_path);
        if (mf.n_lat() != truth_n.n_lat() || mf.n_lon() != truth_n.n_lon())
            throw DataError("mask grid does not match data grid");
        mask.n_lat = mf.n_lat();
        mask.n_lon = mf.n_lon();
        for (double v : mf.frame_channel(0, 0)) mask.m.push_back(v > 0.5 ? 1 : 0);
    } else {
        RandomStream mask_rng = seeds.stream("mask");
        mask = random_mask(truth_n.n_lat(), truth_n.n_lon(), cfg.mask_density, mask_rng);
    }
    {
        FieldSequence mf = FieldSequence::zeros(
            truth_n.grid, {{"mask", ChannelKind::generic, std::nullopt, Transform::none}}, 1,
            truth_n.stride_hours);
        for (std::size_t p = 0; p < mask.m.size(); ++p)
            mf.values[p] = static_cast<double>(mask.m[p]);
        write_blob(mf, out / "mask.bin");
    }

    const ForwardOperator op = sparse_mask(mask, truth_n);
    RandomStream obs_rng = seeds.stream("observation");
    const std::vector<double> y =
        noisy_observation(op.apply(truth_n), cfg.guidance.delta_sq, obs_rng);

    const GuidedDenoise hook = make_guidance_hook(*ic.ckpt.model, op, y, cfg.guidance);
    std::vector<FieldSequence> members(cfg.members);
    for_each_member(cfg.members, [&](std::size_t m) {
        RandomStream rng = seeds.stream("member", m);
        FieldSequence z = gaussian_like(truth_n, rng);
        members[m] = sample(*ic.ckpt.model, cfg.sampler, z, rng, {}, hook);
    });

    {
        std::ofstream os(out / "observed_residuals.csv", std::ios::trunc);
        os << "member,frac_within_3sigma,mean_abs_residual,max_abs_residual\n";
        os.precision(12);
        const double sigma = std::sqrt(cfg.guidance.delta_sq);
        for (std::size_t m = 0; m < members.size(); ++m) {
            const auto ay = op.apply(members[m]);
            std::size_t within = 0;
            double mean_abs = 0.0, max_abs = 0.0;
            for (std::size_t i = 0; i < ay.size(); ++i) {
                const double r = std::abs(ay[i] - y[i]);
                within += r <= 3.0 * sigma ? 1 : 0;
                mean_abs += r;
                max_abs = std::max(max_abs, r);
            }
            os << m << "," << static_cast<double>(within) / static_cast<double>(ay.size())
               << "," << mean_abs / static_cast<double>(ay.size()) << "," << max_abs << "\n";
        }
    }
    std::vector<FieldSequence> members_phys;
    for (const auto& m : members) members_phys.push_back(denormalize(m, ic.data.stats));
    write_members(out, "member", members_phys);
    write_manifest(out, "reconstruct", cfg);
    std::cout << "reconstruct: " << op.out_shape.size() << " observations, " << cfg.members
              << " members -> " << out.string() << "\n";
    return 0;
}

int cmd_constrain_dam(const RunConfig& cfg, const fs::path& ckpt_path, const fs::path& data_dir,
                      const fs::path& out) {
    fs::create_directories(out);
    InferenceContext ic = load_inference(cfg, ckpt_path, data_dir);
    if (ic.data.orography.empty())
        throw DataError("constrain-dam: dataset lacks orography.bin");
    const std::size_t t_model = ic.ckpt.model->config().frames;
    const FieldSequence shape = ic.split_norm.window(0, t_model);
    const ForwardOperator op = dam_operator(shape, ic.data.stats, ic.data.orography);

    const FieldSequence initial = ic.split_norm.window(0, 1);
    double target;
    if (cfg.dam_target == "auto") {
        // DAM of the first clean frame
        FieldSequence one = shape;
        for (std::size_t t = 0; t < t_model; ++t)
            std::copy(initial.values.begin(), initial.values.end(),
                      one.values.begin() + static_cast<std::ptrdiff_t>(t * one.frame_size()));
        target = op.apply(one)[0];
    } else {
        try {
            target = std::stod(cfg.dam_target);
        } catch (const std::exception&) {
            throw ConfigError("constrain-dam: --target must be 'auto' or a number");
        }
    }
    const std::vector<double> y(t_model, target);

    SeedPolicy seeds{cfg.seed};
    const GuidedDenoise hook = make_guidance_hook(*ic.ckpt.model, op, y, cfg.guidance);
    RandomStream guided_rng = seeds.stream("rollout/guided");
    RandomStream free_rng = seeds.stream("rollout/free");
    const FieldSequence guided = rollout(*ic.ckpt.model, cfg.sampler, initial, t_model,
                                         cfg.windows, guided_rng, {}, hook);
    const FieldSequence unguided =
        rollout(*ic.ckpt.model, cfg.sampler, initial, t_model, cfg.windows, free_rng, {});

    auto dam_trace = [&](const FieldSequence& run) {
        const ForwardOperator per_frame =
            dam_operator(run.window(0, 1), ic.data.stats, ic.data.orography);
        std::vector<double> trace(run.frames);
        for (std::size_t t = 0; t < run.frames; ++t)
            trace[t] = per_frame.apply(run.window(t, 1))[0];
        return trace;
    };
    const auto g_trace = dam_trace(guided);
    const auto f_trace = dam_trace(unguided);
    {
        std::ofstream os(out / "dam_vs_time.csv", std::ios::trunc);
        os << "frame,lead_hours,guided_dam,unguided_dam,target\n";
        os.precision(12);
        for (std::size_t t = 0; t < g_trace.size(); ++t)
            os << t << "," << guided.stride_hours * static_cast<double>(t) << "," << g_trace[t]
               << "," << f_trace[t] << "," << target << "\n";
    }
    write_blob(denormalize(guided, ic.data.stats), out / "guided.bin", "stats.json");
    write_blob(denormalize(unguided, ic.data.stats), out / "unguided.bin", "stats.json");
    write_manifest(out, "constrain-dam", cfg);
    std::cout << "constrain-dam: target " << target << ", " << cfg.windows << " windows -> "
              << out.string() << "\n";
    return 0;
}

int cmd_storyline(const RunConfig& cfg, const fs::path& ckpt_path, const fs::path& data_dir,
                  const fs::path& out) {
    fs::create_directories(out);
    InferenceContext ic = load_inference(cfg, ckpt_path, data_dir);
    const std::size_t t_model = ic.ckpt.model->config().frames;
    const FieldSequence truth_n = ic.split_norm.window(0, t_model);
    const FieldSequence control_init = truth_n.window(0, 1);

    std::vector<std::size_t> temp_channels, hum_channels;
    for (std::size_t c = 0; c < truth_n.n_channels(); ++c) {
        if (truth_n.channels[c].kind == ChannelKind::temperature) temp_channels.push_back(c);
        if (truth_n.channels[c].kind == ChannelKind::humidity) hum_channels.push_back(c);
    }
    if (temp_channels.empty() || hum_channels.empty())
        throw DataError("storyline: dataset lacks temperature or humidity channels");

    // warm-world initial state: +delta_t on temperature, humidity scaled by
    // q_scale, expressed on the normalized fields
    FieldSequence warm_init = control_init;
    std::vector<double> delta_norm(truth_n.n_channels(), 0.0);
    for (std::size_t c : temp_channels) {
        delta_norm[c] = cfg.delta_t / ic.data.stats.stddev[c];
        for (double& v : warm_init.frame_channel(0, c)) v += delta_norm[c];
    }
    for (std::size_t c : hum_channels) {
        const double mu = ic.data.stats.mean[c], sd = ic.data.stats.stddev[c];
        double mean_q = 0.0;
        for (double v : control_init.frame_channel(0, c)) mean_q += mu + sd * v;
        mean_q /= static_cast<double>(truth_n.pixels());
        delta_norm[c] = (cfg.q_scale - 1.0) * mean_q / sd;
        for (double& v : warm_init.frame_channel(0, c))
            v = (cfg.q_scale * (mu + sd * v) - mu) / sd;
    }

    // guidance targets: historical per-frame spatial means shifted into the
    // warm world; channels weighted by the inverse perturbation magnitude
    std::vector<std::size_t> guided_channels = temp_channels;
    guided_channels.insert(guided_channels.end(), hum_channels.begin(), hum_channels.end());
    const ForwardOperator op = channel_spatial_mean(guided_channels, true, truth_n);
    std::vector<double> y;
    GuidanceConfig gcfg = cfg.guidance;
    gcfg.residual_weights.clear();
    for (std::size_t t = 0; t < t_model; ++t)
        for (std::size_t c : guided_channels) {
            double base = 0.0;
            for (double v : truth_n.frame_channel(t, c)) base += v;
            base /= static_cast<double>(truth_n.pixels());
            y.push_back(base + delta_norm[c]);
            gcfg.residual_weights.push_back(1.0 / std::max(std::abs(delta_norm[c]), 1e-6));
        }

    SeedPolicy seeds{cfg.seed};
    auto run_ensemble = [&](const char* label, const FieldSequence& init,
                            const GuidedDenoise& hook) {
        std::vector<FieldSequence> members(cfg.members);
        for_each_member(cfg.members, [&](std::size_t m) {
            RandomStream rng = seeds.stream(label, m);
            members[m] = forecast(*ic.ckpt.model, cfg.sampler, init, t_model, rng, {}, hook);
        });
        return members;
    };
    const GuidedDenoise hook = make_guidance_hook(*ic.ckpt.model, op, y, gcfg);
    const auto control = run_ensemble("control", control_init, {});
    const auto warm_free = run_ensemble("warm_free", warm_init, {});
    const auto warm_guided = run_ensemble("warm_guided", warm_init, hook);

    std::size_t precip_c = truth_n.n_channels();
    for (std::size_t c = 0; c < truth_n.n_channels(); ++c)
        if (truth_n.channels[c].kind == ChannelKind::precipitation) precip_c = c;
    {
        std::ofstream os(out / "peak_stats.csv", std::ios::trunc);
        os << "scenario,member,peak_precip_m\n";
        os.precision(12);
        auto peaks = [&](const char* label, const std::vector<FieldSequence>& members) {
            for (std::size_t m = 0; m < members.size(); ++m) {
                const FieldSequence phys = denormalize(members[m], ic.data.stats);
                double peak = 0.0;
                if (precip_c < truth_n.n_channels())
                    for (std::size_t t = 0; t < phys.frames; ++t)
                        for (double v : phys.frame_channel(t, precip_c))
                            peak = std::max(peak, v);
                os << label << "," << m << "," << peak << "\n";
            }
        };
        peaks("control", control);
        peaks("warm_free", warm_free);
        peaks("warm_guided", warm_guided);
    }
    {
        std::ofstream os(out / "scenario_means.csv", std::ios::trunc);
        os << "scenario,frame,channel,spatial_mean_normalized,target\n";
        os.precision(12);
        auto means = [&](const char* label, const std::vector<FieldSequence>& members) {
            EnsembleSet ens{members};
            const FieldSequence mean = ens.mean();
            const auto got = op.apply(mean);
            for (std::size_t t = 0; t < t_model; ++t)
                for (std::size_t s = 0; s < guided_channels.size(); ++s)
                    os << label << "," << t << ","
                       << truth_n.channels[guided_channels[s]].name << ","
                       << got[t * guided_channels.size() + s] << ","
                       << y[t * guided_channels.size() + s] << "\n";
        };
        means("control", control);
        means("warm_free", warm_free);
        means("warm_guided", warm_guided);
    }
    write_members(out, "control", {denormalize(control[0], ic.data.stats)});
    write_members(out, "warm_free", {denormalize(warm_free[0], ic.data.stats)});
    write_members(out, "warm_guided", {denormalize(warm_guided[0], ic.data.stats)});
    write_manifest(out, "storyline", cfg);
    std::cout << "storyline: +" << cfg.delta_t << "K, q x" << cfg.q_scale << ", " << cfg.members
              << " members per scenario -> " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const RunConfig& cfg, const fs::path& pred_path, const fs::path& truth_path,
                 const fs::path& out) {
    fs::create_directories(out);
    const FieldSequence truth = read_blob(truth_path);
    const auto area = area_weights(truth.grid);
    MetricReport report;
    report.config_hash = config_hash(cfg.to_json());
    report.seed = cfg.seed;

    std::vector<FieldSequence> members;
    if (fs::is_directory(pred_path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(pred_path)) {
            const auto name = e.path().filename().string();
            if (name.size() > 4 && name.substr(name.size() - 4) == ".bin" &&
                name.rfind("member", 0) == 0)
                files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) members.push_back(read_blob(f));
        if (members.empty()) throw DataError("evaluate: no member_*.bin blobs in directory");
    } else {
        members.push_back(read_blob(pred_path));
    }
    for (const auto& m : members)
        if (m.n_channels() != truth.n_channels() || m.pixels() != truth.pixels())
            throw DataError("evaluate: prediction and truth shapes differ");

    const std::size_t frames = std::min(members[0].frames, truth.frames);
    for (std::size_t t = 0; t < frames; ++t) {
        const double lead = truth.stride_hours * static_cast<double>(t);
        for (std::size_t c = 0; c < truth.n_channels(); ++c) {
            const auto tf = truth.frame_channel(t, c);
            report.add(truth.channels[c].name, lead, "rmse_member0",
                       rmse_weighted(members[0].frame_channel(t, c), tf, area));
            if (members.size() >= 2) {
                std::vector<std::span<const double>> fields;
                for (const auto& m : members) fields.push_back(m.frame_channel(t, c));
                report.add(truth.channels[c].name, lead, "crps", crps(fields, tf, area));
                report.add(truth.channels[c].name, lead, "spread", spread(fields, area));
                report.add(truth.channels[c].name, lead, "skill", skill(fields, tf, area));
                const double r = ssr(fields, tf, area);
                if (std::isfinite(r)) report.add(truth.channels[c].name, lead, "ssr", r);
            }
        }
    }
    {
        std::ofstream os(out / "metrics.csv", std::ios::trunc);
        report.write_csv(os);
        std::ofstream pv(out / "metrics_provenance.json", std::ios::trunc);
        pv << report.provenance().dump(2) << "\n";
    }
    write_manifest(out, "evaluate", cfg);
    std::cout << "evaluate: " << members.size() << " member(s), " << frames << " frames -> "
              << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"windkit: diffusion-forcing engine for guided atmospheric inference tasks"};
    app.require_subcommand(1);

    std::string config_path, data_dir, ckpt_path, out_dir, pred_path, truth_path;
    std::string mask_arg, target_arg, preset_arg, split_arg;
    std::uint64_t seed_arg = 0;
    bool seed_set = false;
    long frames_arg = -1, steps_arg = -1, members_arg = -1, windows_arg = -1, factor_arg = -1;
    long t_agg_arg = -1, train_steps_arg = -1, context_arg = -1, width_arg = -1;
    double eta_arg = -1.0, delta_t_arg = -1e30, q_scale_arg = -1.0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option_function<std::uint64_t>(
            "--seed",
            [&](std::uint64_t v) {
                seed_arg = v;
                seed_set = true;
            },
            "master seed");
        cmd->add_option("--out", out_dir, "output directory")->required();
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen);
    gen->add_option("--frames", frames_arg, "total frames to generate");
    gen->add_option("--preset", preset_arg, "channel preset: standard6 | dam9");

    CLI::App* tr = app.add_subcommand("train", "train the denoiser");
    add_common(tr);
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--steps", train_steps_arg, "training step budget");
    tr->add_option("--width", width_arg, "network width");

    auto add_task_common = [&](CLI::App* cmd) {
        add_common(cmd);
        cmd->add_option("--ckpt", ckpt_path, "checkpoint manifest")->required();
        cmd->add_option("--data", data_dir, "dataset directory")->required();
        cmd->add_option("--members", members_arg, "ensemble members");
        cmd->add_option("--steps", steps_arg, "sampler steps");
        cmd->add_option("--eta", eta_arg, "DDIM stochasticity in [0,1]");
        cmd->add_option("--split", split_arg, "data split: train | val | test");
    };

    CLI::App* fc = app.add_subcommand("forecast", "ensemble forecast from clean context");
    add_task_common(fc);
    fc->add_option("--windows", windows_arg, "evaluation windows");
    fc->add_option("--context", context_arg, "clean context frames");

    CLI::App* dss = app.add_subcommand("downscale-spatial", "guided spatial downscaling");
    add_task_common(dss);
    dss->add_option("--factor", factor_arg, "pooling factor");

    CLI::App* dst = app.add_subcommand("downscale-temporal", "guided temporal downscaling");
    add_task_common(dst);
    dst->add_option("--agg", t_agg_arg, "aggregated leading frames");

    CLI::App* rec = app.add_subcommand("reconstruct", "sparse-observation reconstruction");
    add_task_common(rec);
    rec->add_option("--mask", mask_arg, "mask blob path or density in (0,1]");

    CLI::App* dam = app.add_subcommand("constrain-dam", "rollout with dry-air-mass guidance");
    add_task_common(dam);
    dam->add_option("--windows", windows_arg, "rollout windows");
    dam->add_option("--target", target_arg, "DAM target: auto | <value>");

    CLI::App* sto = app.add_subcommand("storyline", "counterfactual warm-world scenarios");
    add_task_common(sto);
    sto->add_option("--delta-t", delta_t_arg, "temperature shift in K");
    sto->add_option("--q-scale", q_scale_arg, "humidity scale factor");

    CLI::App* ev = app.add_subcommand("evaluate", "metrics for generated outputs");
    add_common(ev);
    ev->add_option("--pred", pred_path, "prediction blob or member directory")->required();
    ev->add_option("--truth", truth_path, "truth blob")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg;
        if (sto->parsed()) {
            // storyline defaults ahead of config/flags: 10 stochastic steps,
            // 10 CG iterations, observation variance 1e-3
            cfg.sampler.n_steps = 10;
            cfg.sampler.eta = 1.0;
            cfg.guidance.cg_iters = 10;
            cfg.guidance.delta_sq = 1e-3;
        }
        if (!config_path.empty()) {
            RunConfig from_file = load_run_config(config_path);
            if (sto->parsed()) {
                // keep storyline defaults where the file used generic ones
                std::ifstream is(config_path);
                nlohmann::json raw;
                is >> raw;
                if (!(raw.contains("sampler") && raw["sampler"].contains("n_steps")))
                    from_file.sampler.n_steps = cfg.sampler.n_steps;
                if (!(raw.contains("sampler") && raw["sampler"].contains("eta")))
                    from_file.sampler.eta = cfg.sampler.eta;
                if (!(raw.contains("guidance") && raw["guidance"].contains("cg_iters")))
                    from_file.guidance.cg_iters = cfg.guidance.cg_iters;
                if (!(raw.contains("guidance") && raw["guidance"].contains("delta_sq")))
                    from_file.guidance.delta_sq = cfg.guidance.delta_sq;
            }
            cfg = from_file;
        }
        if (seed_set) cfg.seed = seed_arg;
        if (frames_arg >= 0) cfg.frames = static_cast<std::size_t>(frames_arg);
        if (!preset_arg.empty()) {
            if (preset_arg == "standard6")
                cfg.world.preset = WorldConfig::Preset::standard6;
            else if (preset_arg == "dam9")
                cfg.world.preset = WorldConfig::Preset::dam9;
            else
                throw ConfigError("--preset must be standard6 or dam9");
        }
        if (train_steps_arg >= 0) cfg.train.max_steps = static_cast<std::size_t>(train_steps_arg);
        if (width_arg > 0) cfg.model_width = static_cast<std::size_t>(width_arg);
        if (members_arg > 0) cfg.members = static_cast<std::size_t>(members_arg);
        if (steps_arg > 0) cfg.sampler.n_steps = static_cast<std::size_t>(steps_arg);
        if (eta_arg >= 0.0) cfg.sampler.eta = eta_arg;
        if (windows_arg > 0) cfg.windows = static_cast<std::size_t>(windows_arg);
        if (context_arg > 0) cfg.context_frames = static_cast<std::size_t>(context_arg);
        if (factor_arg > 0) cfg.factor = static_cast<std::size_t>(factor_arg);
        if (t_agg_arg > 0) cfg.t_agg = static_cast<std::size_t>(t_agg_arg);
        if (!split_arg.empty()) cfg.split = split_arg;
        if (!target_arg.empty()) cfg.dam_target = target_arg;
        if (delta_t_arg > -1e29) cfg.delta_t = delta_t_arg;
        if (q_scale_arg > 0.0) cfg.q_scale = q_scale_arg;
        if (!mask_arg.empty()) {
            char* end = nullptr;
            const double d = std::strtod(mask_arg.c_str(), &end);
            if (end && *end == '\0' && d > 0.0 && d <= 1.0)
                cfg.mask_density = d;
            else
                cfg.mask_path = mask_arg;
        }

        if (gen->parsed()) return cmd_gen_data(cfg, out_dir);
        if (tr->parsed()) return cmd_train(cfg, data_dir, out_dir);
        if (fc->parsed()) return cmd_forecast(cfg, ckpt_path, data_dir, out_dir);
        if (dss->parsed()) return cmd_downscale_spatial(cfg, ckpt_path, data_dir, out_dir);
        if (dst->parsed()) return cmd_downscale_temporal(cfg, ckpt_path, data_dir, out_dir);
        if (rec->parsed()) return cmd_reconstruct(cfg, ckpt_path, data_dir, out_dir);
        if (dam->parsed()) return cmd_constrain_dam(cfg, ckpt_path, data_dir, out_dir);
        if (sto->parsed()) return cmd_storyline(cfg, ckpt_path, data_dir, out_dir);
        if (ev->parsed()) return cmd_evaluate(cfg, pred_path, truth_path, out_dir);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
