#include "procsplat/error.hpp"
#include "procsplat/image.hpp"
#include "procsplat/ply.hpp"
#include "procsplat/service.hpp"
#include "procsplat/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace procsplat {

namespace fs = std::filesystem;

namespace {

Json read_config(const std::string& path) { return path.empty() ? Json::object() : read_json(path); }

Camera read_camera(const std::string& path) {
    const Json j = read_json(path);
    return camera_from_json(j.is_object() && j.contains("camera") ? j.at("camera") : j);
}

std::optional<Vec3> dims_flag(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return Vec3(v[0], v[1], v[2]);
}

const ProceduralCode& pick_code(const std::vector<ProceduralCode>& codes, const std::string& building) {
    if (codes.empty()) throw ConfigError("no building code found");
    if (building.empty()) return codes.front();
    for (const auto& c : codes)
        if (c.building_id == building) return c;
    throw ResolveError("no building named '" + building + "' in the code file");
}

Vec3 resolve_dims(const ProceduralCode& code, const std::optional<Vec3>& given) {
    if (given) return *given;
    if (code.dims) return *code.dims;
    throw ConfigError("building " + code.building_id + " declares no dims; pass --dims");
}

int cmd_fit(const std::string& data_dir, const std::string& layout_path, const std::string& manifest_path,
            const std::string& config_path, const std::string& out, const std::optional<std::uint64_t>& seed) {
    const Dataset data = load_dataset(data_dir);
    const auto manifest = manifest_from_json(read_json(manifest_path));
    const Layout layout = load_layout(layout_path, manifest);
    TrainConfig cfg = train_config_from_json(read_config(config_path));
    if (seed) cfg.seed = *seed;
    int last_decile = -1;
    const TrainResult r = train(data, layout, manifest, cfg, [&](int iter, int total) {
        const int decile = total > 0 ? 10 * iter / total : 10;
        if (decile != last_decile) {
            last_decile = decile;
            std::cerr << "fit: " << iter << "/" << total << "\n";
        }
    });
    save_checkpoint(out, r.checkpoint);
    write_metrics_log(fs::path(out) / "metrics.jsonl", r.log);
    if (r.final) std::cout << "test PSNR " << r.final->psnr << " dB, SSIM " << r.final->ssim << "\n";
    std::cout << "wrote " << out << " (" << r.checkpoint.gaussian_count() << " Gaussians)\n";
    return 0;
}

int cmd_render(const std::string& ckpt, const std::string& camera, const std::string& out,
               const std::vector<double>& background) {
    const Scene scene = load_checkpoint(ckpt).assemble_scene();
    RenderConfig cfg;
    if (!background.empty()) cfg.background = Vec3(background[0], background[1], background[2]);
    const auto png = render_png(scene, read_camera(camera), cfg);
    write_text_atomic(out, std::string(png.begin(), png.end()));
    return 0;
}

int cmd_assemble(const std::string& library_dir, const std::string& layout_path, const std::optional<Vec3>& dims,
                 const std::string& out) {
    Checkpoint ck = load_checkpoint(library_dir);
    const auto manifest = ck.manifest();
    Layout layout;
    if (dims) {
        const ProceduralCode code = parse(read_text(layout_path));
        layout.instantiations = expand(code, manifest, *dims);
        layout.code = code;
    } else {
        layout = load_layout(layout_path, manifest);
    }
    // Fitted residuals stay attached where the instance still exists; new instances get none.
    for (auto& inst : layout.instantiations)
        if (inst.variance_index &&
            std::none_of(ck.variances.begin(), ck.variances.end(), [&](const VarianceAsset& v) {
                return v.owner_asset_id == inst.asset_id && v.instance_index == *inst.variance_index;
            }))
            inst.variance_index.reset();
    ck.instantiations = layout.instantiations;
    ck.code_text = layout.code ? serialize(*layout.code) : std::string{};
    save_checkpoint(out, ck);
    std::cout << "wrote " << out << " (" << ck.instantiations.size() << " instances, "
              << ck.assemble_scene().size() << " Gaussians)\n";
    return 0;
}

int cmd_generate_building(const std::string& library_dir, const std::string& code_path, const std::string& building,
                          const std::optional<Vec3>& dims, std::uint64_t seed, bool no_variance,
                          const std::string& out) {
    const AssetLibrary lib = AssetLibrary::from_checkpoint(load_checkpoint(library_dir));
    const auto codes = code_path.empty() ? lib.codes : parse_all(read_text(code_path));
    const ProceduralCode& code = pick_code(codes, building);
    const BuildingResult b = generate_building(code, resolve_dims(code, dims), lib, seed, !no_variance);
    Checkpoint ck;
    ck.sh_degree = lib.sh_degree;
    ck.bases = lib.bases;
    ck.variances = b.variances;
    ck.instantiations = b.instantiations;
    ck.code_text = serialize(code);
    save_checkpoint(out, ck);
    std::cout << "wrote " << out << " (" << b.instantiations.size() << " instances, " << b.scene.size()
              << " Gaussians)\n";
    return 0;
}

int cmd_generate_city(const std::string& layout_path, const std::string& library_dir, const std::string& config_path,
                      std::uint64_t seed, const std::string& out) {
    const AssetLibrary lib = AssetLibrary::from_checkpoint(load_checkpoint(library_dir));
    const CityConfig cfg = city_config_from_json(read_config(config_path));
    const Json j = read_json(layout_path);
    const CityResult r = j.is_object() && j.contains("placements")
                             ? assemble_city(city_layout_from_json(j), lib, cfg.use_variance)
                             : generate_city(city_input_from_json(j), lib, cfg, seed);
    fs::create_directories(out);
    save_checkpoint(fs::path(out) / "model", r.to_checkpoint(lib));
    write_json(fs::path(out) / "layout_out.json", city_layout_to_json(r.layout));
    std::cout << "wrote " << out << " (" << r.layout.blocks.size() << " blocks, " << r.layout.placements.size()
              << " buildings, " << r.layout.decorations.size() << " decorations, " << r.scene.size()
              << " Gaussians)\n";
    return 0;
}

int cmd_serve(const std::string& library_dir, const std::string& config_path, const std::string& host, int port) {
    Workshop w(AssetLibrary::from_checkpoint(load_checkpoint(library_dir)),
               city_config_from_json(read_config(config_path)));
    HttpServer server(w);
    const int bound = server.bind(host, port);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    std::cout << "serving on http://" << host << ":" << bound << std::endl;
    return server.listen() ? 0 : 1;
}

int cmd_export(const std::string& ckpt, const std::string& out) {
    const Checkpoint ck = load_checkpoint(ckpt);
    write_ply(out, ck.assemble_scene().gaussians, ck.sh_degree);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Procedural Gaussian splatting workshop"};
    app.require_subcommand(1);

    std::string out, config, layout, manifest, data, ckpt, camera, library, building, code, host = "127.0.0.1";
    std::uint64_t seed = 0;
    int port = 8080;
    std::vector<double> dims, background;
    bool no_variance = false;

    auto add_seed = [&](CLI::App* c) { return c->add_option("--seed", seed, "random seed"); };
    auto add_dims = [&](CLI::App* c) {
        return c->add_option("--dims", dims, "building length, width, height in meters")->expected(3);
    };

    auto* fit = app.add_subcommand("fit", "fit base and variance assets to posed images");
    fit->add_option("--data", data, "dataset directory with cameras.json")->required();
    fit->add_option("--layout", layout, "procedural code or instantiation list")->required();
    fit->add_option("--manifest", manifest, "asset manifest JSON")->required();
    fit->add_option("--config", config, "train config JSON");
    fit->add_option("--out", out, "checkpoint directory")->required();
    auto* fit_seed = add_seed(fit);

    auto* rnd = app.add_subcommand("render", "render a checkpoint to PNG");
    rnd->add_option("--checkpoint", ckpt)->required();
    rnd->add_option("--camera", camera, "camera JSON")->required();
    rnd->add_option("--out", out, "PNG path")->required();
    rnd->add_option("--background", background)->expected(3);

    auto* asmb = app.add_subcommand("assemble", "re-assemble a checkpoint's assets under a new layout");
    asmb->add_option("--checkpoint", library, "fitted checkpoint")->required();
    asmb->add_option("--layout", layout, "procedural code or instantiation list")->required();
    add_dims(asmb);
    asmb->add_option("--out", out)->required();

    auto* gb = app.add_subcommand("generate-building", "new building from code with random variance draws");
    gb->add_option("--library", library, "checkpoint providing the assets")->required();
    gb->add_option("--code", code, "code file (defaults to the library's own code)");
    gb->add_option("--building", building, "building id inside the code file");
    add_dims(gb);
    add_seed(gb);
    gb->add_flag("--no-variance", no_variance);
    gb->add_option("--out", out)->required();

    auto* gc = app.add_subcommand("generate-city", "lay out and assemble a city");
    gc->add_option("--layout", layout, "boundary and primary roads JSON, or a finished layout")->required();
    gc->add_option("--library", library)->required();
    gc->add_option("--config", config, "city config JSON");
    add_seed(gc);
    gc->add_option("--out", out)->required();

    auto* srv = app.add_subcommand("serve", "HTTP service for the studio UI");
    srv->add_option("--library", library)->required();
    srv->add_option("--config", config, "city config JSON");
    srv->add_option("--host", host);
    srv->add_option("--port", port);

    auto* exp = app.add_subcommand("export", "write the assembled scene as one world-space PLY");
    exp->add_option("--checkpoint", ckpt)->required();
    exp->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code_ = app.exit(e);
        return code_ == 0 ? 0 : 2;
    }

    try {
        if (*fit)
            return cmd_fit(data, layout, manifest, config, out,
                           fit_seed->count() ? std::optional<std::uint64_t>(seed) : std::nullopt);
        if (*rnd) return cmd_render(ckpt, camera, out, background);
        if (*asmb) return cmd_assemble(library, layout, dims_flag(dims), out);
        if (*gb) return cmd_generate_building(library, code, building, dims_flag(dims), seed, no_variance, out);
        if (*gc) return cmd_generate_city(layout, library, config, seed, out);
        if (*srv) return cmd_serve(library, config, host, port);
        if (*exp) return cmd_export(ckpt, out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace procsplat
