#include "procsplat/trainer.hpp"

#include "procsplat/error.hpp"
#include "procsplat/metrics.hpp"
#include "procsplat/params.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

namespace procsplat {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-15;
constexpr double kSplitShrink = 1.6;

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;

    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
    void remap(const std::vector<int>& origin, std::size_t stride) {
        std::vector<double> nm(origin.size() * stride, 0.0), nv(origin.size() * stride, 0.0);
        for (std::size_t i = 0; i < origin.size(); ++i) {
            if (origin[i] < 0) continue;
            std::copy_n(m.begin() + origin[i] * stride, stride, nm.begin() + i * stride);
            std::copy_n(v.begin() + origin[i] * stride, stride, nv.begin() + i * stride);
        }
        m = std::move(nm);
        v = std::move(nv);
    }
};

/// Learning rate per flat parameter slot, position excluded (it is scheduled).
std::vector<double> slot_rates(const TrainConfig& c, int sh_count) {
    std::vector<double> r(param::stride(sh_count), 0.0);
    for (int k = 0; k < 4; ++k) r[param::kRotation + k] = c.lr_rotation;
    for (int k = 0; k < 3; ++k) r[param::kLogScale + k] = c.lr_scale;
    r[param::kOpacity] = c.lr_opacity;
    for (int k = 0; k < 3; ++k) r[param::kSh + k] = c.lr_sh_dc;
    for (int k = 3; k < 3 * sh_count; ++k) r[param::kSh + k] = c.lr_sh_rest;
    return r;
}

double position_rate(const TrainConfig& c, int iter) {
    const double t = c.iterations > 0 ? std::clamp(static_cast<double>(iter) / c.iterations, 0.0, 1.0) : 0.0;
    return std::exp((1.0 - t) * std::log(c.lr_position) + t * std::log(c.lr_position_final));
}

void adam_step(std::vector<Gaussian3D>& gs, const std::vector<double>& grad, AdamState& st,
               const std::vector<double>& rates, double pos_rate, int step) {
    const std::size_t stride = rates.size();
    const double bc1 = 1.0 - std::pow(kAdamBeta1, step);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, step);
    for (std::size_t i = 0; i < gs.size(); ++i) {
        for (std::size_t k = 0; k < stride; ++k) {
            const std::size_t idx = i * stride + k;
            const double g = grad[idx];
            st.m[idx] = kAdamBeta1 * st.m[idx] + (1.0 - kAdamBeta1) * g;
            st.v[idx] = kAdamBeta2 * st.v[idx] + (1.0 - kAdamBeta2) * g * g;
            const double lr = k < static_cast<std::size_t>(param::kRotation) ? pos_rate : rates[k];
            param::at(gs[i], static_cast<int>(k)) -=
                lr * (st.m[idx] / bc1) / (std::sqrt(st.v[idx] / bc2) + kAdamEps);
        }
    }
}

const AssetSpec& spec_of(const Checkpoint& model, const std::string& id) {
    for (const auto& b : model.bases)
        if (b.spec.id == id) return b.spec;
    throw ResolveError("no base asset named " + id);
}

void check_positive(int v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
}

}  // namespace

void TrainConfig::validate() const {
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    check_positive(clamp_every, "clamp_every");
    check_positive(densify_every, "densify_every");
    if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) throw ConfigError("lambda_ssim must be in [0, 1]");
    if (!(soft_margin >= 0.0)) throw ConfigError("soft_margin_m must be >= 0");
    if (n_init < 1) throw ConfigError("N_init must be >= 1");
    if (!(variance_ratio >= 0.0)) throw ConfigError("variance_ratio must be >= 0");
    if (sh_degree < 0 || sh_degree > kMaxShDegree) throw ConfigError("sh_degree must be 0, 1 or 2");
    for (double lr : {lr_position, lr_position_final, lr_rotation, lr_scale, lr_opacity, lr_sh_dc, lr_sh_rest})
        if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    static const std::set<std::string> known = {
        "iterations", "densify_from", "densify_until", "densify_every", "clamp_every", "clamp_enabled",
        "lambda_ssim", "soft_margin_m", "N_init", "variance_ratio", "sh_degree", "lr_position",
        "lr_position_final", "lr_rotation", "lr_scale", "lr_opacity", "lr_sh_dc", "lr_sh_rest",
        "densify_grad_threshold", "percent_dense", "prune_opacity", "eval_every", "seed", "threads",
        "background"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown train config key '" + key + "'");
    try {
        auto get = [&](const char* key, auto& dst) {
            if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
        };
        get("iterations", c.iterations);
        get("densify_from", c.densify_from);
        get("densify_until", c.densify_until);
        get("densify_every", c.densify_every);
        get("clamp_every", c.clamp_every);
        get("clamp_enabled", c.clamp_enabled);
        get("lambda_ssim", c.lambda_ssim);
        get("soft_margin_m", c.soft_margin);
        get("N_init", c.n_init);
        get("variance_ratio", c.variance_ratio);
        get("sh_degree", c.sh_degree);
        get("lr_position", c.lr_position);
        get("lr_position_final", c.lr_position_final);
        get("lr_rotation", c.lr_rotation);
        get("lr_scale", c.lr_scale);
        get("lr_opacity", c.lr_opacity);
        get("lr_sh_dc", c.lr_sh_dc);
        get("lr_sh_rest", c.lr_sh_rest);
        get("densify_grad_threshold", c.densify_grad_threshold);
        get("percent_dense", c.percent_dense);
        get("prune_opacity", c.prune_opacity);
        get("eval_every", c.eval_every);
        get("seed", c.seed);
        get("threads", c.threads);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    if (j.contains("background")) c.background = vec3_from_json(j.at("background"), "background");
    c.validate();
    return c;
}

Json train_config_to_json(const TrainConfig& c) {
    return {{"iterations", c.iterations},
            {"densify_from", c.densify_from},
            {"densify_until", c.densify_until},
            {"densify_every", c.densify_every},
            {"clamp_every", c.clamp_every},
            {"clamp_enabled", c.clamp_enabled},
            {"lambda_ssim", c.lambda_ssim},
            {"soft_margin_m", c.soft_margin},
            {"N_init", c.n_init},
            {"variance_ratio", c.variance_ratio},
            {"sh_degree", c.sh_degree},
            {"lr_position", c.lr_position},
            {"lr_position_final", c.lr_position_final},
            {"lr_rotation", c.lr_rotation},
            {"lr_scale", c.lr_scale},
            {"lr_opacity", c.lr_opacity},
            {"lr_sh_dc", c.lr_sh_dc},
            {"lr_sh_rest", c.lr_sh_rest},
            {"densify_grad_threshold", c.densify_grad_threshold},
            {"percent_dense", c.percent_dense},
            {"prune_opacity", c.prune_opacity},
            {"eval_every", c.eval_every},
            {"seed", c.seed},
            {"threads", c.threads},
            {"background", vec_to_json(c.background)}};
}

Box3 three_sigma_box(const Gaussian3D& g) {
    const Mat3 sigma = covariance3d(g.rotation, g.scale());
    const Vec3 half = 3.0 * sigma.diagonal().cwiseSqrt();
    return {g.position - half, g.position + half};
}

ClampReport bbox_clamp(std::vector<Gaussian3D>& gaussians, const AssetSpec& spec, double soft_margin) {
    if (!(soft_margin >= 0.0)) throw InvalidParameter("bbox_clamp: soft margin must be >= 0");
    const Box3 hard = local_box(spec);
    const Box3 soft{hard.min.array() - soft_margin, hard.max.array() + soft_margin};
    ClampReport rep;
    for (Gaussian3D& g : gaussians) {
        const Box3 reach = three_sigma_box(g);
        if (!soft.contains(reach)) {
            g.log_scale.array() -= std::log(2.0);
            ++rep.scale_count;
        }
        const Vec3 clamped = g.position.cwiseMax(hard.min).cwiseMin(hard.max);
        if (clamped != g.position) {
            g.position = clamped;
            ++rep.position_count;
        }
    }
    return rep;
}

DensifyReport densify_and_prune(std::vector<Gaussian3D>& gaussians, const GradStats& stats,
                                const AssetSpec& spec, const TrainConfig& config, Rng& rng,
                                std::vector<int>& origin, bool densify) {
    DensifyReport rep;
    const std::size_t n = gaussians.size();
    std::vector<Gaussian3D> out;
    std::vector<int> from;
    std::vector<bool> drop(n, false);
    std::vector<Gaussian3D> added;
    if (densify) {
        const double size_limit = config.percent_dense * spec.extent.norm();
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (stats.count.size() <= i || stats.mean(i) < config.densify_grad_threshold) continue;
            const Gaussian3D& g = gaussians[i];
            const Vec3 s = g.scale();
            if (s.maxCoeff() <= size_limit) {
                added.push_back(g);
                ++rep.cloned;
            } else {
                const Mat3 r = g.rotation_matrix();
                for (int c = 0; c < 2; ++c) {
                    Gaussian3D child = g;
                    const Vec3 z(normal(rng), normal(rng), normal(rng));
                    child.position = g.position + r * s.cwiseProduct(z);
                    child.log_scale = (s / kSplitShrink).array().log();
                    added.push_back(child);
                }
                drop[i] = true;
                ++rep.split;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (drop[i]) continue;
        if (gaussians[i].opacity() < config.prune_opacity) {
            ++rep.pruned;
            continue;
        }
        out.push_back(gaussians[i]);
        from.push_back(static_cast<int>(i));
    }
    for (auto& g : added) {
        if (g.opacity() < config.prune_opacity) {
            ++rep.pruned;
            continue;
        }
        out.push_back(std::move(g));
        from.push_back(-1);
    }
    gaussians = std::move(out);
    origin = std::move(from);
    return rep;
}

Json MetricsRecord::to_json() const {
    Json j = {{"iter", iter}, {"loss", loss}};
    if (psnr) j["psnr"] = std::isfinite(*psnr) ? Json(*psnr) : Json("inf");
    if (ssim) j["ssim"] = *ssim;
    j["n_gaussians"] = n_gaussians;
    j["clamp_scale_count"] = clamp_scale_count;
    j["clamp_pos_count"] = clamp_pos_count;
    if (clamp) j["clamp"] = true;
    return j;
}

void write_metrics_log(const std::filesystem::path& path, const std::vector<MetricsRecord>& log) {
    std::string text;
    for (const auto& r : log) text += r.to_json().dump() + "\n";
    write_text_atomic(path, text);
}

Evaluation evaluate(const Scene& scene, std::span<const View> views, const RenderConfig& cfg) {
    Evaluation e;
    if (views.empty()) return e;
    for (const View& v : views) {
        const RenderOutput out = render(scene, v.camera, cfg);
        e.psnr += psnr(out.color, v.image);
        if (v.image.width >= kSsimWindow && v.image.height >= kSsimWindow) e.ssim += ssim(out.color, v.image);
    }
    e.psnr /= static_cast<double>(views.size());
    e.ssim /= static_cast<double>(views.size());
    return e;
}

Checkpoint initial_model(const Layout& layout, std::span<const AssetSpec> manifest, const TrainConfig& config) {
    config.validate();
    Rng rng(config.seed);
    Checkpoint model;
    model.sh_degree = config.sh_degree;
    model.instantiations = layout.instantiations;
    if (layout.code) model.code_text = serialize(*layout.code);
    const auto counts = allocate_points(manifest, config.n_init);
    for (std::size_t a = 0; a < manifest.size(); ++a)
        model.bases.push_back(init_base_asset(manifest[a], counts[a], rng, config.sh_degree));
    if (config.variance_ratio > 0.0) {
        std::unordered_map<std::string, int> ordinal;
        for (auto& inst : model.instantiations)
            if (!inst.variance_index) inst.variance_index = ordinal[inst.asset_id]++;
        for (std::size_t a = 0; a < manifest.size(); ++a) {
            const int count = std::max(1, static_cast<int>(std::lround(config.variance_ratio * counts[a])));
            auto vs = init_variance_assets(manifest[a], model.instantiations, count, rng, config.sh_degree);
            for (auto& v : vs) model.variances.push_back(std::move(v));
        }
    } else {
        for (auto& inst : model.instantiations) inst.variance_index.reset();
    }
    return model;
}

TrainResult train_from(const Dataset& data, Checkpoint model, const TrainConfig& config, const ProgressFn& progress) {
    config.validate();
    if (data.train.empty()) throw ConfigError("train: dataset has no training views");
    const int sh_count = sh_coeff_count(model.sh_degree);
    const std::size_t stride = param::stride(sh_count);
    const std::vector<double> rates = slot_rates(config, sh_count);

    RenderConfig rcfg;
    rcfg.background = config.background;
    rcfg.threads = config.threads;

    std::vector<double> diag_of_base, diag_of_var;
    std::vector<const AssetSpec*> spec_of_var;
    for (const auto& b : model.bases) diag_of_base.push_back(b.spec.extent.norm());
    for (const auto& v : model.variances) {
        spec_of_var.push_back(&spec_of(model, v.owner_asset_id));
        diag_of_var.push_back(spec_of_var.back()->extent.norm());
    }

    std::vector<AdamState> base_state(model.bases.size()), var_state(model.variances.size());
    std::vector<GradStats> base_stats, var_stats;
    for (std::size_t a = 0; a < model.bases.size(); ++a) {
        base_state[a].resize(model.bases[a].gaussians.size() * stride);
        base_stats.emplace_back(model.bases[a].gaussians.size());
    }
    for (std::size_t v = 0; v < model.variances.size(); ++v) {
        var_state[v].resize(model.variances[v].gaussians.size() * stride);
        var_stats.emplace_back(model.variances[v].gaussians.size());
    }

    TrainResult result;
    if (!data.test.empty()) result.initial = evaluate(model.assemble_scene(), data.test, rcfg);

    Rng rng(config.seed ^ 0x5DEECE66Dull);
    std::vector<std::size_t> order(data.train.size());
    std::size_t cursor = order.size();

    for (int it = 1; it <= config.iterations; ++it) {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const View& view = data.train[order[cursor++]];
        const Scene scene = model.assemble_scene();
        const RenderOutput out = render(scene, view.camera, rcfg);
        const LossResult l = loss(out.color, view.image, config.lambda_ssim);
        if (!std::isfinite(l.value)) {
            if (config.diagnostic_dir) save_checkpoint(*config.diagnostic_dir, model);
            throw TrainingDiverged("loss became non-finite", it);
        }
        const SceneGradients grads = render_backward(scene, out, l.grad);
        const AssetGradients ag = accumulate_shared(grads, scene);

        const double ndc_x = 0.5 * view.camera.width, ndc_y = 0.5 * view.camera.height;
        for (std::size_t e = 0; e < scene.size(); ++e) {
            if (!out.splats[e].visible) continue;
            const Provenance& p = scene.provenance[e];
            const double norm = std::hypot(grads.mean2d[e].x() * ndc_x, grads.mean2d[e].y() * ndc_y);
            if (p.source == Source::Base) base_stats[p.asset_index].add(p.local_index, norm);
            else var_stats[p.variance_slot].add(p.local_index, norm);
        }

        const double pos_rate = position_rate(config, it);
        for (std::size_t a = 0; a < model.bases.size(); ++a)
            adam_step(model.bases[a].gaussians, ag.bases[a], base_state[a], rates, pos_rate * diag_of_base[a], it);
        for (std::size_t v = 0; v < model.variances.size(); ++v)
            adam_step(model.variances[v].gaussians, ag.variances[v], var_state[v], rates, pos_rate * diag_of_var[v], it);

        if (it >= config.densify_from && it <= config.densify_until && it % config.densify_every == 0) {
            std::vector<int> origin;
            for (std::size_t a = 0; a < model.bases.size(); ++a) {
                densify_and_prune(model.bases[a].gaussians, base_stats[a], model.bases[a].spec, config, rng, origin);
                base_state[a].remap(origin, stride);
                base_stats[a] = GradStats(model.bases[a].gaussians.size());
            }
            for (std::size_t v = 0; v < model.variances.size(); ++v) {
                densify_and_prune(model.variances[v].gaussians, var_stats[v], *spec_of_var[v], config, rng, origin);
                var_state[v].remap(origin, stride);
                var_stats[v] = GradStats(model.variances[v].gaussians.size());
            }
        }

        MetricsRecord rec;
        rec.iter = it;
        rec.loss = l.value;
        if (config.clamp_enabled && it % config.clamp_every == 0) {
            ClampReport rep;
            for (auto& b : model.bases) rep += bbox_clamp(b.gaussians, b.spec, config.soft_margin);
            for (std::size_t v = 0; v < model.variances.size(); ++v)
                rep += bbox_clamp(model.variances[v].gaussians, *spec_of_var[v], config.soft_margin);
            rec.clamp = true;
            rec.clamp_scale_count = rep.scale_count;
            rec.clamp_pos_count = rep.position_count;
        }
        rec.n_gaussians = model.gaussian_count();
        const bool eval_now = (config.eval_every > 0 && it % config.eval_every == 0) || it == config.iterations;
        if (eval_now && !data.test.empty()) {
            const Evaluation e = evaluate(model.assemble_scene(), data.test, rcfg);
            rec.psnr = e.psnr;
            rec.ssim = e.ssim;
        }
        result.log.push_back(rec);
        if (progress) progress(it, config.iterations);
    }
    model.iterations += config.iterations;
    if (!data.test.empty()) result.final = evaluate(model.assemble_scene(), data.test, rcfg);
    result.checkpoint = std::move(model);
    return result;
}

TrainResult train(const Dataset& data, const Layout& layout, std::span<const AssetSpec> manifest,
                  const TrainConfig& config, const ProgressFn& progress) {
    for (const auto& inst : layout.instantiations)
        if (std::none_of(manifest.begin(), manifest.end(), [&](const AssetSpec& s) { return s.id == inst.asset_id; }))
            throw ResolveError("layout references unknown asset " + inst.asset_id);
    return train_from(data, initial_model(layout, manifest, config), config, progress);
}

Checkpoint unshare(const Checkpoint& model) {
    Checkpoint flat;
    flat.sh_degree = model.sh_degree;
    flat.iterations = model.iterations;
    // Asset-major, list order within an asset: the same scene order assemble() produces.
    for (const auto& base : model.bases) {
        for (std::size_t k = 0; k < model.instantiations.size(); ++k) {
            const Instantiation& inst = model.instantiations[k];
            if (inst.asset_id != base.spec.id) continue;
            BaseAsset copy = base;
            copy.spec.id = base.spec.id + "@" + std::to_string(k);
            if (inst.variance_index) {
                for (const auto& v : model.variances)
                    if (v.owner_asset_id == base.spec.id && v.instance_index == *inst.variance_index)
                        copy.gaussians.insert(copy.gaussians.end(), v.gaussians.begin(), v.gaussians.end());
            }
            flat.instantiations.push_back({copy.spec.id, inst.transform, std::nullopt});
            flat.bases.push_back(std::move(copy));
        }
    }
    return flat;
}

TrainResult fit_baseline(const Dataset& data, const Checkpoint& init, const TrainConfig& config,
                         const ProgressFn& progress) {
    TrainConfig cfg = config;
    cfg.clamp_enabled = false;
    return train_from(data, unshare(init), cfg, progress);
}

}  // namespace procsplat
