#include "procsplat/service.hpp"

#include "procsplat/error.hpp"
#include "procsplat/image.hpp"

#include <limits>

namespace procsplat {

const char* to_string(JobKind k) {
    switch (k) {
        case JobKind::Fit: return "fit";
        case JobKind::Assemble: return "assemble";
        case JobKind::Generate: return "generate";
    }
    return "?";
}

const char* to_string(JobStatus s) {
    switch (s) {
        case JobStatus::Queued: return "queued";
        case JobStatus::Running: return "running";
        case JobStatus::Done: return "done";
        case JobStatus::Failed: return "failed";
    }
    return "?";
}

Json JobState::to_json() const {
    Json j = {{"id", id},
              {"kind", to_string(kind)},
              {"status", to_string(status)},
              {"progress", progress},
              {"artifacts", artifacts}};
    if (!error.empty()) j["error"] = error;
    return j;
}

std::string JobRegistry::create(JobKind kind) {
    std::lock_guard lock(mutex_);
    JobState s;
    s.id = "job-" + std::to_string(next_++);
    s.kind = kind;
    jobs_.emplace(s.id, s);
    return s.id;
}

JobState& JobRegistry::at(const std::string& id) {
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) throw ContractViolation("unknown job " + id);
    return it->second;
}

void JobRegistry::advance(const std::string& id, JobStatus next, const std::string& error) {
    std::lock_guard lock(mutex_);
    JobState& s = at(id);
    const bool ok = (s.status == JobStatus::Queued && next == JobStatus::Running) ||
                    (s.status == JobStatus::Running && (next == JobStatus::Done || next == JobStatus::Failed));
    if (!ok)
        throw ContractViolation("job " + id + ": cannot go from " + to_string(s.status) + " to " + to_string(next));
    s.status = next;
    if (next == JobStatus::Done) s.progress = 1.0;
    if (next == JobStatus::Failed) s.error = error;
}

void JobRegistry::set_progress(const std::string& id, double fraction) {
    std::lock_guard lock(mutex_);
    JobState& s = at(id);
    s.progress = std::clamp(std::max(fraction, s.progress), 0.0, 1.0);
}

void JobRegistry::add_artifact(const std::string& id, const std::string& artifact) {
    std::lock_guard lock(mutex_);
    at(id).artifacts.push_back(artifact);
}

std::optional<JobState> JobRegistry::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

Json scene_stats(const Scene& scene) {
    std::size_t variance_entries = 0;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        variance_entries += scene.provenance[i].source == Source::Variance;
        lo = lo.cwiseMin(scene.gaussians[i].position);
        hi = hi.cwiseMax(scene.gaussians[i].position);
    }
    Json j = {{"gaussians", scene.size()},
              {"instances", scene.instances.size()},
              {"variance_gaussians", variance_entries},
              {"assets", scene.asset_ids.size()}};
    if (!scene.empty()) j["bbox"] = {{"min", vec_to_json(lo)}, {"max", vec_to_json(hi)}};
    return j;
}

std::vector<std::uint8_t> render_png(const Scene& scene, const Camera& camera, const RenderConfig& config) {
    return encode_png(render(scene, camera, config).color);
}

namespace {

Response json_response(int status, const Json& j) { return {status, "application/json", j.dump()}; }

Response error_response(int status, const std::string& message) {
    return json_response(status, Json{{"error", message}});
}

Json parse_body(const std::string& body) {
    try {
        Json j = Json::parse(body);
        if (!j.is_object()) throw ConfigError("request body must be a JSON object");
        return j;
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what());
    }
}

std::uint64_t seed_of(const Json& j) {
    if (!j.contains("seed")) return 0;
    if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed must be a nonnegative integer");
    return j.at("seed").get<std::uint64_t>();
}

/// Maps library errors to HTTP statuses. Parse errors carry their source span.
template <class Fn>
Response guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ParseError& e) {
        return json_response(400, Json{{"error", e.message()}, {"line", e.line()}, {"column", e.column()}});
    } catch (const Error& e) {
        return error_response(400, e.what());
    } catch (const Json::exception& e) {
        return error_response(400, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

}  // namespace

Workshop::Workshop(AssetLibrary library, CityConfig city, RenderConfig render)
    : library_(std::move(library)), city_(std::move(city)), render_(render) {
    city_.validate();
}

std::string Workshop::add_scene(Scene scene) {
    auto ptr = std::make_shared<const Scene>(std::move(scene));
    std::unique_lock lock(scenes_mutex_);
    const std::string id = "scene-" + std::to_string(next_scene_++);
    scenes_.emplace(id, std::move(ptr));
    return id;
}

std::shared_ptr<const Scene> Workshop::scene(const std::string& id) const {
    std::shared_lock lock(scenes_mutex_);
    const auto it = scenes_.find(id);
    return it == scenes_.end() ? nullptr : it->second;
}

Response Workshop::get_assets() const {
    Json pools = Json::object();
    for (const auto& [id, pool] : library_.pools) pools[id] = pool.size();
    Json codes = Json::array();
    for (const auto& c : library_.codes) codes.push_back(c.building_id);
    Json sizes = Json::object();
    for (const auto& b : library_.bases) sizes[b.spec.id] = b.gaussians.size();
    return json_response(200, Json{{"assets", manifest_to_json(library_.manifest())},
                                   {"gaussians", sizes},
                                   {"variance_pools", pools},
                                   {"codes", codes},
                                   {"sh_degree", library_.sh_degree}});
}

Response Workshop::get_code(const std::string& building) const {
    for (const auto& c : library_.codes)
        if (c.building_id == building) return {200, "text/plain; charset=utf-8", serialize(c)};
    return error_response(404, "no building code named '" + building + "'");
}

Response Workshop::post_assemble(const std::string& body) {
    return guarded([&]() -> Response {
        const Json j = parse_body(body);
        if (!j.contains("code") || !j.at("code").is_string()) throw ConfigError("'code' must be a string");
        const ProceduralCode code = parse(j.at("code").get<std::string>());
        Vec3 dims;
        if (j.contains("dims")) dims = vec3_from_json(j.at("dims"), "dims");
        else if (code.dims) dims = *code.dims;
        else throw ConfigError("building " + code.building_id + " declares no dims and none were given");
        const bool variance = j.value("use_variance", true);
        const std::uint64_t seed = seed_of(j);

        const std::string job = jobs_.create(JobKind::Assemble);
        jobs_.advance(job, JobStatus::Running);
        try {
            BuildingResult b = generate_building(code, dims, library_, seed, variance);
            Json stats = scene_stats(b.scene);
            const std::string id = add_scene(std::move(b.scene));
            jobs_.add_artifact(job, id);
            jobs_.advance(job, JobStatus::Done);
            return json_response(200, Json{{"scene_id", id}, {"job_id", job}, {"stats", stats}});
        } catch (const std::exception& e) {
            jobs_.advance(job, JobStatus::Failed, e.what());
            throw;
        }
    });
}

Response Workshop::post_render(const std::string& body) const {
    return guarded([&]() -> Response {
        const Json j = parse_body(body);
        if (!j.contains("scene_id") || !j.at("scene_id").is_string()) throw ConfigError("'scene_id' must be a string");
        const auto s = scene(j.at("scene_id").get<std::string>());
        if (!s) return error_response(404, "unknown scene " + j.at("scene_id").get<std::string>());
        if (!j.contains("camera")) throw ConfigError("missing 'camera'");
        const Camera cam = camera_from_json(j.at("camera"));
        RenderConfig cfg = render_;
        if (j.contains("background")) cfg.background = vec3_from_json(j.at("background"), "background");
        const auto png = render_png(*s, cam, cfg);
        return {200, "image/png", std::string(png.begin(), png.end())};
    });
}

Response Workshop::post_layout(const std::string& body) const {
    return guarded([&]() -> Response {
        const Json j = parse_body(body);
        const CityConfig cfg = j.contains("config") ? city_config_from_json(j.at("config"), city_) : city_;
        const CityLayout layout = generate_layout(city_input_from_json(j), cfg, seed_of(j), &library_);
        return json_response(200, city_layout_to_json(layout));
    });
}

Response Workshop::post_city(const std::string& body) {
    return guarded([&]() -> Response {
        const Json j = parse_body(body);
        if (!j.contains("layout")) throw ConfigError("missing 'layout'");
        const Json& lj = j.at("layout");
        const CityConfig cfg = j.contains("config") ? city_config_from_json(j.at("config"), city_) : city_;
        // A finished layout (from /layout) is built as is; a bare boundary is laid out first.
        const bool finished = lj.is_object() && lj.contains("placements");
        const CityLayout layout = finished ? city_layout_from_json(lj) : CityLayout{};
        const CityInput input = finished ? CityInput{} : city_input_from_json(lj);

        const std::string job = jobs_.create(JobKind::Generate);
        jobs_.advance(job, JobStatus::Running);
        try {
            CityResult r = finished ? assemble_city(layout, library_, cfg.use_variance)
                                    : generate_city(input, library_, cfg, seed_of(j));
            Json stats = scene_stats(r.scene);
            stats["buildings"] = r.layout.placements.size();
            stats["decorations"] = r.layout.decorations.size();
            const std::string id = add_scene(std::move(r.scene));
            jobs_.add_artifact(job, id);
            jobs_.advance(job, JobStatus::Done);
            return json_response(200, Json{{"scene_id", id},
                                           {"job_id", job},
                                           {"stats", stats},
                                           {"layout", city_layout_to_json(r.layout)}});
        } catch (const std::exception& e) {
            jobs_.advance(job, JobStatus::Failed, e.what());
            throw;
        }
    });
}

Response Workshop::get_job(const std::string& id) const {
    const auto s = jobs_.get(id);
    if (!s) return error_response(404, "unknown job " + id);
    return json_response(200, s->to_json());
}

}  // namespace procsplat
