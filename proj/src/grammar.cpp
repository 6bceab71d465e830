#include "procsplat/grammar.hpp"

#include "procsplat/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace procsplat {

// ---------------------------------------------------------------------------
// Equality

bool operator==(const Group& a, const Group& b) {
    return a.repeatable == b.repeatable && a.items == b.items;
}
bool operator==(const Item& a, const Item& b) { return a.node == b.node; }
bool operator==(const Facade& a, const Facade& b) { return a.items == b.items; }
bool operator==(const Level& a, const Level& b) {
    return a.id == b.id && a.repeat_count == b.repeat_count && a.facades == b.facades;
}
bool operator==(const ProceduralCode& a, const ProceduralCode& b) {
    return a.building_id == b.building_id && a.dims == b.dims && a.levels == b.levels;
}

Mat4 InstanceTransform::matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = R * S.asDiagonal();
    m.topRightCorner<3, 1>() = T;
    return m;
}

void InstanceTransform::validate() const {
    if (!R.allFinite() || !T.allFinite() || !S.allFinite())
        throw InvalidParameter("instance transform is not finite");
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(R.determinant() - 1.0) > 1e-9)
        throw InvalidParameter("instance rotation is not a proper rotation");
    if ((S.array() <= 0.0).any()) throw InvalidParameter("instance scale must be positive");
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { Ident, Number, LBrace, RBrace, LParen, RParen, Bar, Star, End };

struct Lexeme {
    Tok kind;
    std::string text;
    Span span;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<Lexeme> lex(std::string_view src) {
    std::vector<Lexeme> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k, ++i) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    while (i < src.size()) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        if (c == '#') {
            while (i < src.size() && src[i] != '\n') advance(1);
            continue;
        }
        const Span here{line, col};
        auto single = [&](Tok k) {
            out.push_back({k, std::string(1, c), here});
            advance(1);
        };
        switch (c) {
            case '{': single(Tok::LBrace); continue;
            case '}': single(Tok::RBrace); continue;
            case '(': single(Tok::LParen); continue;
            case ')': single(Tok::RParen); continue;
            case '|': single(Tok::Bar); continue;
            case '*': single(Tok::Star); continue;
            default: break;
        }
        if (ident_start(c)) {
            std::size_t j = i;
            while (j < src.size() && ident_char(src[j])) ++j;
            out.push_back({Tok::Ident, std::string(src.substr(i, j - i)), here});
            advance(j - i);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
            std::size_t j = i + 1;
            while (j < src.size()) {
                const char d = src[j];
                const bool exp_sign = (d == '-' || d == '+') && (src[j - 1] == 'e' || src[j - 1] == 'E');
                if (std::isdigit(static_cast<unsigned char>(d)) || d == '.' || d == 'e' || d == 'E' || exp_sign)
                    ++j;
                else
                    break;
            }
            out.push_back({Tok::Number, std::string(src.substr(i, j - i)), here});
            advance(j - i);
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", here.line, here.column);
    }
    out.push_back({Tok::End, "", {line, col}});
    return out;
}

const char* describe(Tok k) {
    switch (k) {
        case Tok::Ident: return "identifier";
        case Tok::Number: return "number";
        case Tok::LBrace: return "'{'";
        case Tok::RBrace: return "'}'";
        case Tok::LParen: return "'('";
        case Tok::RParen: return "')'";
        case Tok::Bar: return "'|'";
        case Tok::Star: return "'*'";
        case Tok::End: return "end of input";
    }
    return "?";
}

class Parser {
public:
    explicit Parser(std::string_view text) : toks_(lex(text)) {}

    std::vector<ProceduralCode> file() {
        std::vector<ProceduralCode> out;
        while (peek().kind != Tok::End) out.push_back(building());
        if (out.empty()) fail(peek(), "expected 'building'");
        return out;
    }

private:
    const Lexeme& peek(std::size_t ahead = 0) const {
        return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    }
    const Lexeme& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

    [[noreturn]] void fail(const Lexeme& at, const std::string& msg) const {
        throw ParseError(msg, at.span.line, at.span.column);
    }

    const Lexeme& expect(Tok k, const char* what) {
        const Lexeme& t = peek();
        if (t.kind != k) fail(t, std::string("expected ") + what + ", found " + found(t));
        return next();
    }

    void keyword(const char* kw) {
        const Lexeme& t = peek();
        if (t.kind != Tok::Ident || t.text != kw)
            fail(t, std::string("expected '") + kw + "', found " + found(t));
        next();
    }

    static std::string found(const Lexeme& t) {
        if (t.kind == Tok::Ident || t.kind == Tok::Number) return "'" + t.text + "'";
        return describe(t.kind);
    }

    double number() {
        const Lexeme& t = expect(Tok::Number, "number");
        double v = 0.0;
        const char* b = t.text.data();
        const char* e = b + t.text.size();
        if (*b == '+') ++b;
        auto [p, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || p != e || !std::isfinite(v)) fail(t, "malformed number '" + t.text + "'");
        return v;
    }

    ProceduralCode building() {
        ProceduralCode code;
        code.span = peek().span;
        keyword("building");
        code.building_id = expect(Tok::Ident, "building name").text;
        expect(Tok::LBrace, "'{'");
        if (peek().kind == Tok::Ident && peek().text == "dims") {
            next();
            Vec3 d;
            for (int k = 0; k < 3; ++k) d[k] = number();
            code.dims = d;
        }
        do {
            code.levels.push_back(level());
        } while (peek().kind == Tok::Ident && peek().text == "level");
        expect(Tok::RBrace, "'}' or 'level'");
        return code;
    }

    Level level() {
        Level lv;
        lv.span = peek().span;
        keyword("level");
        lv.id = expect(Tok::Ident, "level name").text;
        if (peek().kind == Tok::Ident && peek().text == "x") {
            next();
            const Lexeme& t = expect(Tok::Number, "repeat count");
            int n = 0;
            auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), n);
            if (ec != std::errc() || p != t.text.data() + t.text.size() || n < 1)
                fail(t, "repeat count must be a positive integer");
            lv.repeat_count = n;
        }
        expect(Tok::LBrace, "'{'");
        lv.facades.push_back(facade());
        while (peek().kind == Tok::Bar) {
            next();
            lv.facades.push_back(facade());
        }
        expect(Tok::RBrace, "'}' or '|'");
        return lv;
    }

    Facade facade() {
        Facade f;
        f.span = peek().span;
        while (peek().kind == Tok::Ident || peek().kind == Tok::LParen) f.items.push_back(item());
        if (f.items.empty()) fail(peek(), "expected asset token or '(' , found " + found(peek()));
        return f;
    }

    Item item() {
        const Lexeme& t = peek();
        if (t.kind == Tok::Ident) {
            next();
            Token tok{t.text, false};
            if (peek().kind == Tok::Star) {
                next();
                tok.scalable = true;
            }
            return Item(std::move(tok), t.span);
        }
        const Lexeme open = expect(Tok::LParen, "'('");
        Group g;
        while (peek().kind == Tok::Ident || peek().kind == Tok::LParen) g.items.push_back(item());
        if (peek().kind != Tok::RParen) {
            if (g.items.empty()) fail(peek(), "empty group");
            fail(open, "unclosed group, expected ')' before " + found(peek()));
        }
        if (g.items.empty()) fail(peek(), "empty group");
        next();
        if (peek().kind == Tok::Star) {
            next();
            g.repeatable = true;
        }
        return Item(std::move(g), open.span);
    }

    std::vector<Lexeme> toks_;
    std::size_t pos_ = 0;
};

void format_number(std::ostringstream& os, double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, p - buf);
}

void write_items(std::ostringstream& os, const std::vector<Item>& items) {
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (k) os << ' ';
        const Item& it = items[k];
        if (it.is_token()) {
            os << it.token().asset_id << (it.token().scalable ? "*" : "");
        } else {
            os << '(';
            write_items(os, it.group().items);
            os << ')' << (it.group().repeatable ? "*" : "");
        }
    }
}

}  // namespace

std::vector<ProceduralCode> parse_all(std::string_view text) { return Parser(text).file(); }

ProceduralCode parse(std::string_view text) {
    auto all = parse_all(text);
    if (all.size() != 1) {
        const Span s = all[1].span;
        throw ParseError("expected exactly one building", s.line, s.column);
    }
    return std::move(all.front());
}

std::string serialize(const ProceduralCode& code) {
    std::ostringstream os;
    os << "building " << code.building_id << " {\n";
    if (code.dims) {
        os << "  dims";
        for (int k = 0; k < 3; ++k) {
            os << ' ';
            format_number(os, (*code.dims)[k]);
        }
        os << '\n';
    }
    for (const Level& lv : code.levels) {
        os << "  level " << lv.id;
        if (lv.repeat_count != 1) os << " x " << lv.repeat_count;
        os << " {\n    ";
        for (std::size_t f = 0; f < lv.facades.size(); ++f) {
            if (f) os << " | ";
            write_items(os, lv.facades[f].items);
        }
        os << "\n  }\n";
    }
    os << "}\n";
    return os.str();
}

std::string serialize(std::span<const ProceduralCode> codes) {
    std::string out;
    for (std::size_t k = 0; k < codes.size(); ++k) {
        if (k) out += '\n';
        out += serialize(codes[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resolution and expansion

namespace {

using SpecIndex = std::unordered_map<std::string, const AssetSpec*>;

SpecIndex index_manifest(std::span<const AssetSpec> manifest) {
    SpecIndex idx;
    for (const AssetSpec& s : manifest) {
        if (s.id.empty()) throw ManifestError("manifest entry with empty id");
        if ((s.extent.array() <= 0.0).any() || !s.extent.allFinite())
            throw ManifestError("asset '" + s.id + "' has a non-positive extent");
        if (!idx.emplace(s.id, &s).second) throw ManifestError("duplicate asset id '" + s.id + "'");
    }
    return idx;
}

void collect_ids(const std::vector<Item>& items, std::vector<std::string>& out) {
    for (const Item& it : items) {
        if (it.is_token())
            out.push_back(it.token().asset_id);
        else
            collect_ids(it.group().items, out);
    }
}

const char* facade_name(std::size_t f) {
    static const char* names[] = {"front", "right", "back", "left"};
    return f < 4 ? names[f] : "extra";
}

std::string where(const ProceduralCode& code, const Level& lv, std::size_t f) {
    return "building " + code.building_id + ", level " + lv.id + ", facade " + std::to_string(f) +
           " (" + facade_name(f) + ")";
}

/// Width bookkeeping of one facade.
struct FacadeBudget {
    double fixed = 0.0;          // fixed tokens outside the repeat group
    double scalable = 0.0;       // scalable tokens outside the repeat group
    double group_fixed = 0.0;
    double group_scalable = 0.0;
    int repeat_groups = 0;
};

void tally(const std::vector<Item>& items, const SpecIndex& idx, bool in_group, FacadeBudget& b) {
    for (const Item& it : items) {
        if (it.is_token()) {
            const double w = idx.at(it.token().asset_id)->extent.x();
            if (in_group)
                (it.token().scalable ? b.group_scalable : b.group_fixed) += w;
            else
                (it.token().scalable ? b.scalable : b.fixed) += w;
        } else {
            const Group& g = it.group();
            if (g.repeatable) ++b.repeat_groups;
            tally(g.items, idx, in_group || g.repeatable, b);
        }
    }
}

double level_height(const Level& lv, const SpecIndex& idx) {
    std::vector<std::string> ids;
    for (const Facade& f : lv.facades) collect_ids(f.items, ids);
    double h = 0.0;
    for (const auto& id : ids) h = std::max(h, idx.at(id)->extent.z());
    return h;
}

Mat3 facade_rotation(std::size_t f) {
    Mat3 r = Mat3::Identity();
    switch (f % 4) {
        case 1: r << 0, -1, 0, 1, 0, 0, 0, 0, 1; break;
        case 2: r << -1, 0, 0, 0, -1, 0, 0, 0, 1; break;
        case 3: r << 0, 1, 0, -1, 0, 0, 0, 0, 1; break;
        default: break;
    }
    return r;
}

Vec3 facade_origin(std::size_t f, const Vec3& dims) {
    switch (f % 4) {
        case 1: return {dims.x(), 0.0, 0.0};
        case 2: return {dims.x(), dims.y(), 0.0};
        case 3: return {0.0, dims.y(), 0.0};
        default: return Vec3::Zero();
    }
}

struct Emitter {
    const SpecIndex& idx;
    Mat3 rot;
    Vec3 origin;
    double z0;
    double z_scale;
    double scalable_factor;
    double group_factor;
    int repeats;
    double cursor = 0.0;
    std::map<std::string, int>& variance_counter;
    InstantiationList& out;

    void place(const Token& tok, double factor) {
        const AssetSpec& spec = *idx.at(tok.asset_id);
        Instantiation inst;
        inst.asset_id = tok.asset_id;
        inst.transform.R = rot;
        inst.transform.S = {factor, 1.0, z_scale};
        const Vec3 local_min = inst.transform.S.cwiseProduct(spec.box_min());
        inst.transform.T = origin + rot * (Vec3(cursor, 0.0, z0) - local_min);
        inst.variance_index = variance_counter[tok.asset_id]++;
        out.push_back(std::move(inst));
        cursor += spec.extent.x() * factor;
    }

    void walk(const std::vector<Item>& items, bool in_group) {
        for (const Item& it : items) {
            if (it.is_token()) {
                const Token& tok = it.token();
                double factor = 1.0;
                if (tok.scalable)
                    factor = scalable_factor;
                else if (in_group)
                    factor = group_factor;
                place(tok, factor);
            } else if (it.group().repeatable) {
                for (int r = 0; r < repeats; ++r) walk(it.group().items, true);
            } else {
                walk(it.group().items, in_group);
            }
        }
    }
};

constexpr double kWidthTol = 1e-9;

}  // namespace

const ProceduralCode& resolve(const ProceduralCode& code, std::span<const AssetSpec> manifest) {
    const SpecIndex idx = index_manifest(manifest);
    std::vector<std::string> ids;
    for (const Level& lv : code.levels) {
        if (lv.repeat_count < 1) throw ResolveError("level " + lv.id + " has repeat count < 1");
        if (lv.facades.empty() || lv.facades.size() > 4)
            throw ResolveError("level " + lv.id + " must have between one and four facades");
        for (const Facade& f : lv.facades) {
            if (f.items.empty()) throw ResolveError("level " + lv.id + " has an empty facade");
            collect_ids(f.items, ids);
        }
    }
    std::set<std::string> unknown;
    for (const auto& id : ids)
        if (!idx.count(id)) unknown.insert(id);
    if (!unknown.empty()) {
        std::string msg = "unknown asset id(s):";
        for (const auto& id : unknown) msg += " " + id;
        throw ResolveError(msg);
    }
    return code;
}

double min_facade_length(const Facade& facade, std::span<const AssetSpec> manifest) {
    const SpecIndex idx = index_manifest(manifest);
    FacadeBudget b;
    tally(facade.items, idx, false, b);
    return b.fixed;
}

double natural_height(const ProceduralCode& code, std::span<const AssetSpec> manifest) {
    const SpecIndex idx = index_manifest(manifest);
    double h = 0.0;
    for (const Level& lv : code.levels) h += level_height(lv, idx) * lv.repeat_count;
    return h;
}

InstantiationList expand(const ProceduralCode& code, std::span<const AssetSpec> manifest,
                         const Vec3& dims) {
    resolve(code, manifest);
    const SpecIndex idx = index_manifest(manifest);
    if (!dims.allFinite() || (dims.array() <= 0.0).any())
        throw InfeasibleDimensions("building " + code.building_id + ": dims must be positive");

    double height = 0.0;
    for (const Level& lv : code.levels) height += level_height(lv, idx) * lv.repeat_count;
    const double z_scale = dims.z() / height;

    InstantiationList out;
    std::map<std::string, int> variance_counter;
    double z0 = 0.0;
    for (const Level& lv : code.levels) {
        const double h = level_height(lv, idx);
        // Per-facade layout does not depend on the vertical copy.
        struct Layout {
            double scalable_factor = 1.0;
            double group_factor = 1.0;
            int repeats = 0;
        };
        std::vector<Layout> layouts;
        for (std::size_t f = 0; f < lv.facades.size(); ++f) {
            const Facade& fac = lv.facades[f];
            FacadeBudget b;
            tally(fac.items, idx, false, b);
            if (b.repeat_groups > 1)
                throw AmbiguityError(where(code, lv, f) + ": " + std::to_string(b.repeat_groups) +
                                     " repeatable groups compete for the free width");
            const double length = (f % 2 == 0) ? dims.x() : dims.y();
            if (length < b.fixed - kWidthTol)
                throw InfeasibleDimensions(where(code, lv, f) + ": length " + std::to_string(length) +
                                           " m is below the fixed-token width " +
                                           std::to_string(b.fixed) + " m");
            std::vector<std::string> ids;
            collect_ids(fac.items, ids);
            const double across = (f % 2 == 0) ? dims.y() : dims.x();
            for (const auto& id : ids)
                if (idx.at(id)->extent.y() > across + kWidthTol)
                    throw InfeasibleDimensions(where(code, lv, f) + ": asset " + id + " is " +
                                               std::to_string(idx.at(id)->extent.y()) +
                                               " m deep but the building is only " +
                                               std::to_string(across) + " m across");
            Layout lay;
            const double free = length - b.fixed - b.scalable;
            const double period = b.group_fixed + b.group_scalable;
            if (b.repeat_groups == 1 && period > 0.0 && free > 0.0)
                lay.repeats = static_cast<int>(std::floor(free / period + kWidthTol));
            const double residual = free - lay.repeats * period;
            const double scalable_total = b.scalable + lay.repeats * b.group_scalable;
            if (scalable_total > 0.0) {
                lay.scalable_factor = (scalable_total + residual) / scalable_total;
                if (!(lay.scalable_factor > 0.0))
                    throw InfeasibleDimensions(where(code, lv, f) +
                                               ": no room left for the scalable assets");
            } else if (lay.repeats > 0) {
                lay.group_factor = (lay.repeats * period + residual) / (lay.repeats * period);
            } else if (std::abs(residual) > kWidthTol) {
                throw InfeasibleDimensions(where(code, lv, f) + ": " + std::to_string(residual) +
                                           " m of facade length cannot be absorbed");
            }
            layouts.push_back(lay);
        }
        for (int rep = 0; rep < lv.repeat_count; ++rep) {
            for (std::size_t f = 0; f < lv.facades.size(); ++f) {
                Emitter em{idx,
                           facade_rotation(f),
                           facade_origin(f, dims),
                           z0 * z_scale,
                           z_scale,
                           layouts[f].scalable_factor,
                           layouts[f].group_factor,
                           layouts[f].repeats,
                           0.0,
                           variance_counter,
                           out};
                em.walk(lv.facades[f].items, false);
            }
            z0 += h;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Regularization

namespace {

struct Repeat {
    std::size_t start = 0;
    std::size_t period = 0;
    std::size_t count = 0;
    std::size_t coverage() const { return period * count; }
};

bool block_equal(const RawFacade& s, std::size_t a, std::size_t b, std::size_t len) {
    for (std::size_t k = 0; k < len; ++k)
        if (s[a + k] != s[b + k]) return false;
    return true;
}

bool primitive(const RawFacade& s, std::size_t start, std::size_t period) {
    for (std::size_t d = 1; d < period; ++d) {
        if (period % d) continue;
        bool periodic = true;
        for (std::size_t k = d; k < period && periodic; ++k)
            periodic = s[start + k] == s[start + k - d];
        if (periodic) return false;
    }
    return true;
}

/// Widest run of >= 2 back-to-back copies of a primitive unit. Ties prefer the
/// longer unit, then the earlier start.
std::optional<Repeat> best_tandem_repeat(const RawFacade& s) {
    std::optional<Repeat> best;
    const std::size_t n = s.size();
    for (std::size_t p = 1; 2 * p <= n; ++p) {
        for (std::size_t i = 0; i + 2 * p <= n; ++i) {
            if (!primitive(s, i, p)) continue;
            std::size_t count = 1;
            while (i + (count + 1) * p <= n && block_equal(s, i, i + count * p, p)) ++count;
            if (count < 2) continue;
            Repeat r{i, p, count};
            if (!best || r.coverage() > best->coverage() ||
                (r.coverage() == best->coverage() && r.period > best->period))
                best = r;
        }
    }
    return best;
}

Facade regular_facade(const RawFacade& row) {
    Facade f;
    auto tok = [](const std::string& id) { return Item(Token{id, false}); };
    const auto rep = best_tandem_repeat(row);
    if (!rep) {
        for (const auto& id : row) f.items.push_back(tok(id));
        return f;
    }
    for (std::size_t k = 0; k < rep->start; ++k) f.items.push_back(tok(row[k]));
    Group g;
    g.repeatable = true;
    for (std::size_t k = 0; k < rep->period; ++k) g.items.push_back(tok(row[rep->start + k]));
    f.items.emplace_back(std::move(g));
    for (std::size_t k = rep->start + rep->coverage(); k < row.size(); ++k) f.items.push_back(tok(row[k]));
    return f;
}

}  // namespace

ProceduralCode regularize(std::span<const RawLevel> raw_levels, std::string building_id) {
    ProceduralCode code;
    code.building_id = std::move(building_id);
    std::size_t k = 0;
    while (k < raw_levels.size()) {
        std::size_t run = 1;
        while (k + run < raw_levels.size() && raw_levels[k + run] == raw_levels[k]) ++run;
        Level lv;
        lv.id = "L" + std::to_string(code.levels.size() + 1);
        lv.repeat_count = static_cast<int>(run);
        for (const RawFacade& row : raw_levels[k]) lv.facades.push_back(regular_facade(row));
        code.levels.push_back(std::move(lv));
        k += run;
    }
    return code;
}

ProceduralCode literal_code(std::span<const RawLevel> raw_levels, std::string building_id) {
    ProceduralCode code;
    code.building_id = std::move(building_id);
    for (const RawLevel& raw : raw_levels) {
        Level lv;
        lv.id = "L" + std::to_string(code.levels.size() + 1);
        for (const RawFacade& row : raw) {
            Facade f;
            for (const auto& id : row) f.items.emplace_back(Token{id, false});
            lv.facades.push_back(std::move(f));
        }
        code.levels.push_back(std::move(lv));
    }
    return code;
}

Vec3 dims_of(std::span<const RawLevel> raw_levels, std::span<const AssetSpec> manifest) {
    const SpecIndex idx = index_manifest(manifest);
    auto row_length = [&](const RawFacade& row) {
        double w = 0.0;
        for (const auto& id : row) {
            auto it = idx.find(id);
            if (it == idx.end()) throw ResolveError("unknown asset id(s): " + id);
            w += it->second->extent.x();
        }
        return w;
    };
    Vec3 d = Vec3::Zero();
    for (const RawLevel& lv : raw_levels) {
        double h = 0.0;
        double depth = 0.0;
        for (const RawFacade& row : lv)
            for (const auto& id : row) {
                h = std::max(h, idx.at(id)->extent.z());
                depth = std::max(depth, idx.at(id)->extent.y());
            }
        d.z() += h;
        if (!lv.empty()) d.x() = std::max(d.x(), row_length(lv[0]));
        d.y() = std::max(d.y(), lv.size() > 1 ? row_length(lv[1]) : depth);
    }
    return d;
}

}  // namespace procsplat
