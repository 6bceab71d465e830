#include "procsplat/ply.hpp"

#include "procsplat/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace procsplat {

namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

std::vector<std::string> property_names(int sh_count) {
    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int i = 0; i < 3 * (sh_count - 1); ++i) names.push_back("f_rest_" + std::to_string(i));
    names.insert(names.end(), {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"});
    return names;
}

struct Column {
    std::size_t offset = 0;
    bool is_double = false;
};

}  // namespace

Gaussian3D to_float32(const Gaussian3D& g) {
    auto f = [](double v) { return static_cast<double>(static_cast<float>(v)); };
    Gaussian3D out = g;
    for (int k = 0; k < 3; ++k) {
        out.position[k] = f(g.position[k]);
        out.log_scale[k] = f(g.log_scale[k]);
    }
    for (int k = 0; k < 4; ++k) out.rotation[k] = f(g.rotation[k]);
    out.opacity_logit = f(g.opacity_logit);
    for (std::size_t i = 0; i < g.sh.size(); ++i) out.sh[i] = g.sh[i].cast<float>().cast<double>();
    return out;
}

std::string encode_ply(const std::vector<Gaussian3D>& gaussians, int sh_degree) {
    if (sh_degree < 0 || sh_degree > kMaxShDegree) throw InvalidParameter("encode_ply: bad SH degree");
    const int count = sh_coeff_count(sh_degree);
    const auto names = property_names(count);
    std::ostringstream out;
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << gaussians.size() << "\n";
    for (const auto& n : names) out << "property float " << n << "\n";
    out << "end_header\n";
    std::vector<float> row(names.size());
    for (const auto& g : gaussians) {
        if (static_cast<int>(g.sh.size()) != count) throw ShapeError("encode_ply: SH count differs from degree");
        std::size_t i = 0;
        for (int k = 0; k < 3; ++k) row[i++] = static_cast<float>(g.position[k]);
        for (int k = 0; k < 3; ++k) row[i++] = 0.0f;
        for (int c = 0; c < 3; ++c) row[i++] = static_cast<float>(g.sh[0][c]);
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k < count; ++k) row[i++] = static_cast<float>(g.sh[k][c]);
        row[i++] = static_cast<float>(g.opacity_logit);
        for (int k = 0; k < 3; ++k) row[i++] = static_cast<float>(g.log_scale[k]);
        for (int k = 0; k < 4; ++k) row[i++] = static_cast<float>(g.rotation[k]);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    return out.str();
}

std::vector<Gaussian3D> decode_ply(const std::string& bytes) {
    const std::size_t header_end = bytes.find("end_header\n");
    if (bytes.rfind("ply\n", 0) != 0 || header_end == std::string::npos) throw IoError("decode_ply: not a PLY file");
    std::istringstream header(bytes.substr(0, header_end));
    std::string line;
    std::size_t vertex_count = 0, stride = 0;
    bool in_vertex = false, seen_format = false;
    std::map<std::string, Column> columns;
    while (std::getline(header, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") throw IoError("decode_ply: only binary_little_endian is supported");
            seen_format = true;
        } else if (word == "element") {
            std::string name;
            std::size_t n = 0;
            ls >> name >> n;
            if (in_vertex || name != "vertex") throw IoError("decode_ply: only a single vertex element is supported");
            in_vertex = true;
            vertex_count = n;
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            std::size_t size;
            if (type == "float" || type == "float32") size = 4;
            else if (type == "double" || type == "float64") size = 8;
            else throw IoError("decode_ply: unsupported property type " + type);
            columns[name] = {stride, size == 8};
            stride += size;
        }
    }
    if (!seen_format) throw IoError("decode_ply: missing format line");
    const std::size_t body = header_end + std::strlen("end_header\n");
    if (bytes.size() < body + vertex_count * stride) throw IoError("decode_ply: truncated vertex data");

    auto require = [&](const std::string& name) -> const Column& {
        auto it = columns.find(name);
        if (it == columns.end()) throw IoError("decode_ply: missing property " + name);
        return it->second;
    };
    int rest = 0;
    while (columns.count("f_rest_" + std::to_string(rest))) ++rest;
    if (rest % 3 != 0 || sh_degree_for(static_cast<std::size_t>(rest / 3 + 1)) < 0)
        throw IoError("decode_ply: f_rest count does not match a supported SH degree");
    const int count = rest / 3 + 1;

    std::vector<Gaussian3D> out(vertex_count);
    for (std::size_t v = 0; v < vertex_count; ++v) {
        const char* rec = bytes.data() + body + v * stride;
        auto read = [&](const std::string& name) {
            const Column& c = require(name);
            if (c.is_double) {
                double d;
                std::memcpy(&d, rec + c.offset, 8);
                return d;
            }
            float f;
            std::memcpy(&f, rec + c.offset, 4);
            return static_cast<double>(f);
        };
        Gaussian3D& g = out[v];
        g.position = {read("x"), read("y"), read("z")};
        g.sh.assign(count, Vec3::Zero());
        for (int c = 0; c < 3; ++c) g.sh[0][c] = read("f_dc_" + std::to_string(c));
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k < count; ++k) g.sh[k][c] = read("f_rest_" + std::to_string(c * (count - 1) + k - 1));
        g.opacity_logit = read("opacity");
        for (int k = 0; k < 3; ++k) g.log_scale[k] = read("scale_" + std::to_string(k));
        for (int k = 0; k < 4; ++k) g.rotation[k] = read("rot_" + std::to_string(k));
    }
    return out;
}

void write_ply(const std::filesystem::path& path, const std::vector<Gaussian3D>& gaussians, int sh_degree) {
    const std::string bytes = encode_ply(gaussians, sh_degree);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + path.string());
}

std::vector<Gaussian3D> read_ply(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_ply(bytes);
}

}  // namespace procsplat
