#include "procsplat/io.hpp"

#include "procsplat/error.hpp"
#include "procsplat/params.hpp"
#include "procsplat/ply.hpp"

#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

namespace procsplat {

namespace fs = std::filesystem;

namespace {

double number(const Json& j, const std::string& key, const std::string& what) {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_number())
        throw ConfigError(what + ": missing numeric field '" + key + "'");
    return j.at(key).get<double>();
}

int integer(const Json& j, const std::string& key, const std::string& what) {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_number_integer())
        throw ConfigError(what + ": missing integer field '" + key + "'");
    return j.at(key).get<int>();
}

std::vector<double> numbers(const Json& j, std::size_t n, const std::string& what) {
    if (!j.is_array() || j.size() != n) throw ConfigError(what + ": expected " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) throw ConfigError(what + ": expected numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

const Json& field(const Json& j, const std::string& key, const std::string& what) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(what + ": missing field '" + key + "'");
    return j.at(key);
}

std::string temp_suffix() {
    static thread_local std::mt19937_64 rng(std::random_device{}());
    std::ostringstream s;
    s << ".tmp-" << std::hex << rng();
    return s.str();
}

}  // namespace

Json vec_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j, const std::string& what) {
    const auto v = numbers(j, 3, what);
    return {v[0], v[1], v[2]};
}

Json asset_spec_to_json(const AssetSpec& spec) {
    return {{"id", spec.id}, {"extent", vec_to_json(spec.extent)}, {"pivot", vec_to_json(spec.pivot)}};
}

AssetSpec asset_spec_from_json(const Json& j) {
    AssetSpec s;
    const Json& id = field(j, "id", "asset");
    if (!id.is_string() || id.get<std::string>().empty()) throw ManifestError("asset id must be a nonempty string");
    s.id = id.get<std::string>();
    s.extent = vec3_from_json(field(j, "extent", "asset " + s.id), "asset " + s.id + " extent");
    s.pivot = j.contains("pivot") ? vec3_from_json(j.at("pivot"), "asset " + s.id + " pivot") : Vec3::Zero();
    if ((s.extent.array() <= 0.0).any()) throw ManifestError("asset " + s.id + ": extent must be positive");
    return s;
}

std::vector<AssetSpec> manifest_from_json(const Json& j) {
    const Json& arr = j.is_object() ? field(j, "assets", "manifest") : j;
    if (!arr.is_array()) throw ManifestError("manifest must be an array of assets");
    std::vector<AssetSpec> out;
    for (const auto& a : arr) out.push_back(asset_spec_from_json(a));
    return out;
}

Json manifest_to_json(std::span<const AssetSpec> manifest) {
    Json arr = Json::array();
    for (const auto& s : manifest) arr.push_back(asset_spec_to_json(s));
    return arr;
}

Json instantiation_to_json(const Instantiation& inst) {
    Json r = Json::array();
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r.push_back(inst.transform.R(i, k));
    Json j = {{"asset_id", inst.asset_id}, {"R", r}, {"T", vec_to_json(inst.transform.T)},
              {"S", vec_to_json(inst.transform.S)}};
    if (inst.variance_index) j["variance_index"] = *inst.variance_index;
    return j;
}

Instantiation instantiation_from_json(const Json& j) {
    Instantiation inst;
    const Json& id = field(j, "asset_id", "instantiation");
    if (!id.is_string()) throw ConfigError("instantiation: asset_id must be a string");
    inst.asset_id = id.get<std::string>();
    const std::string what = "instantiation of " + inst.asset_id;
    const auto r = numbers(field(j, "R", what), 9, what + " R");
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) inst.transform.R(i, k) = r[i * 3 + k];
    inst.transform.T = vec3_from_json(field(j, "T", what), what + " T");
    inst.transform.S = j.contains("S") ? vec3_from_json(j.at("S"), what + " S") : Vec3::Ones();
    if (j.contains("variance_index") && !j.at("variance_index").is_null()) {
        if (!j.at("variance_index").is_number_integer() || j.at("variance_index").get<int>() < 0)
            throw ConfigError(what + ": variance_index must be a nonnegative integer");
        inst.variance_index = j.at("variance_index").get<int>();
    }
    inst.transform.validate();
    return inst;
}

Json instantiations_to_json(const InstantiationList& list) {
    Json arr = Json::array();
    for (const auto& i : list) arr.push_back(instantiation_to_json(i));
    return arr;
}

InstantiationList instantiations_from_json(const Json& j) {
    const Json& arr = j.is_object() ? field(j, "instantiations", "layout") : j;
    if (!arr.is_array()) throw ConfigError("instantiation list must be an array");
    InstantiationList out;
    for (const auto& e : arr) out.push_back(instantiation_from_json(e));
    return out;
}

Json camera_to_json(const Camera& cam) {
    Json m = Json::array();
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) m.push_back(cam.world_to_camera(i, k));
    return {{"world_to_camera", m}, {"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx},
            {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}};
}

Camera camera_from_json(const Json& j) {
    Camera cam;
    const auto m = numbers(field(j, "world_to_camera", "camera"), 16, "camera world_to_camera");
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) cam.world_to_camera(i, k) = m[i * 4 + k];
    cam.fx = number(j, "fx", "camera");
    cam.fy = number(j, "fy", "camera");
    cam.cx = number(j, "cx", "camera");
    cam.cy = number(j, "cy", "camera");
    cam.width = integer(j, "width", "camera");
    cam.height = integer(j, "height", "camera");
    cam.validate();
    return cam;
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Json read_json(const fs::path& path) {
    const std::string text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + temp_suffix();
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!f) throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_json(const fs::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

Layout load_layout(const fs::path& path, std::span<const AssetSpec> manifest) {
    Layout layout;
    if (path.extension() == ".json") {
        layout.instantiations = instantiations_from_json(read_json(path));
        return layout;
    }
    ProceduralCode code = parse(read_text(path));
    resolve(code, manifest);
    if (!code.dims) throw ConfigError(path.string() + ": building " + code.building_id + " declares no dims");
    layout.instantiations = expand(code, manifest, *code.dims);
    layout.code = std::move(code);
    return layout;
}

Scene Checkpoint::assemble_scene() const { return assemble(instantiations, bases, variances); }

std::vector<AssetSpec> Checkpoint::manifest() const {
    std::vector<AssetSpec> out;
    for (const auto& b : bases) out.push_back(b.spec);
    return out;
}

std::size_t Checkpoint::gaussian_count() const {
    std::size_t n = 0;
    for (const auto& b : bases) n += b.gaussians.size();
    for (const auto& v : variances) n += v.gaussians.size();
    return n;
}

std::size_t Checkpoint::parameter_count() const {
    return gaussian_count() * param::stride(sh_coeff_count(sh_degree)) + 15 * instantiations.size();
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
    const fs::path staging = dir.string() + temp_suffix();
    fs::create_directories(staging);
    try {
        Json assets = Json::array();
        for (std::size_t a = 0; a < ckpt.bases.size(); ++a) {
            const std::string file = "base_" + std::to_string(a) + ".ply";
            write_ply(staging / file, ckpt.bases[a].gaussians, ckpt.sh_degree);
            Json e = asset_spec_to_json(ckpt.bases[a].spec);
            e["ply"] = file;
            assets.push_back(e);
        }
        Json variances = Json::array();
        for (std::size_t v = 0; v < ckpt.variances.size(); ++v) {
            const std::string file = "variance_" + std::to_string(v) + ".ply";
            write_ply(staging / file, ckpt.variances[v].gaussians, ckpt.sh_degree);
            variances.push_back({{"owner", ckpt.variances[v].owner_asset_id},
                                 {"instance_index", ckpt.variances[v].instance_index},
                                 {"ply", file}});
        }
        const Json manifest = {{"format", "procsplat-checkpoint"},
                               {"version", 1},
                               {"sh_degree", ckpt.sh_degree},
                               {"iterations", ckpt.iterations},
                               {"assets", assets},
                               {"variances", variances},
                               {"instantiations", instantiations_to_json(ckpt.instantiations)},
                               {"code", ckpt.code_text}};
        write_json(staging / "manifest.json", manifest);
        if (fs::exists(dir)) {
            const fs::path old = dir.string() + temp_suffix();
            fs::rename(dir, old);
            fs::rename(staging, dir);
            fs::remove_all(old);
        } else {
            if (dir.has_parent_path()) fs::create_directories(dir.parent_path());
            fs::rename(staging, dir);
        }
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}

Checkpoint load_checkpoint(const fs::path& dir) {
    const fs::path mpath = dir / "manifest.json";
    if (!fs::exists(mpath)) throw IoError("checkpoint " + dir.string() + " has no manifest.json");
    const Json m = read_json(mpath);
    if (m.value("format", "") != "procsplat-checkpoint") throw IoError(mpath.string() + ": not a checkpoint manifest");
    Checkpoint ckpt;
    ckpt.sh_degree = integer(m, "sh_degree", "checkpoint");
    ckpt.iterations = m.value("iterations", 0);
    ckpt.code_text = m.value("code", "");
    for (const auto& a : field(m, "assets", "checkpoint")) {
        BaseAsset b;
        b.spec = asset_spec_from_json(a);
        b.gaussians = read_ply(dir / field(a, "ply", "asset").get<std::string>());
        ckpt.bases.push_back(std::move(b));
    }
    for (const auto& v : field(m, "variances", "checkpoint")) {
        VarianceAsset va;
        va.owner_asset_id = field(v, "owner", "variance").get<std::string>();
        va.instance_index = integer(v, "instance_index", "variance");
        va.gaussians = read_ply(dir / field(v, "ply", "variance").get<std::string>());
        ckpt.variances.push_back(std::move(va));
    }
    ckpt.instantiations = instantiations_from_json(field(m, "instantiations", "checkpoint"));
    const int count = sh_coeff_count(ckpt.sh_degree);
    auto check = [&](const std::vector<Gaussian3D>& gs) {
        for (const auto& g : gs)
            if (static_cast<int>(g.sh.size()) != count) throw IoError("checkpoint PLY SH degree mismatch");
    };
    for (const auto& b : ckpt.bases) check(b.gaussians);
    for (const auto& v : ckpt.variances) check(v.gaussians);
    return ckpt;
}

Dataset load_dataset(const fs::path& dir) {
    const fs::path cpath = dir / "cameras.json";
    if (!fs::exists(cpath)) throw IoError("dataset " + dir.string() + " has no cameras.json");
    const Json j = read_json(cpath);
    if (!j.is_array()) throw ConfigError("cameras.json must be an array");
    Dataset data;
    for (const auto& e : j) {
        View v;
        v.camera = camera_from_json(e);
        v.name = field(e, "image", "camera").get<std::string>();
        v.image = read_png(dir / v.name);
        if (v.image.width != v.camera.width || v.image.height != v.camera.height)
            throw ShapeError(v.name + ": image size does not match its camera");
        const std::string split = e.value("split", "train");
        if (split == "train") data.train.push_back(std::move(v));
        else if (split == "test") data.test.push_back(std::move(v));
        else throw ConfigError(v.name + ": split must be train or test");
    }
    if (data.train.empty()) throw ConfigError("dataset has no training views");
    return data;
}

void save_dataset(const fs::path& dir, const Dataset& data) {
    fs::create_directories(dir);
    Json arr = Json::array();
    auto emit = [&](const View& v, const char* split) {
        write_png(dir / v.name, v.image);
        Json c = camera_to_json(v.camera);
        c["image"] = v.name;
        c["split"] = split;
        arr.push_back(c);
    };
    for (const auto& v : data.train) emit(v, "train");
    for (const auto& v : data.test) emit(v, "test");
    write_json(dir / "cameras.json", arr);
}

}  // namespace procsplat
