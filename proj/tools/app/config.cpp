#include "app/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <openssl/sha.h>

namespace selfaffine::cli {

namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::Config, msg); }

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.push_back({});
    return out;
}

/// Tokens separated by whitespace or commas.
std::vector<std::string> tokens(const std::string& s) {
    std::string t = s;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream is(t);
    std::vector<std::string> out;
    for (std::string w; is >> w;) out.push_back(w);
    return out;
}

double to_double(const std::string& s, const std::string& key) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end || !std::isfinite(v)) fail(fmt::format("{}: '{}' is not a number", key, s));
    return v;
}

template <class T>
T to_integer(const std::string& s, const std::string& key) {
    T v{};
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) fail(fmt::format("{}: '{}' is not an integer", key, s));
    return v;
}

bool to_bool(const std::string& s, const std::string& key) {
    std::string t = s;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
    if (t == "false" || t == "no" || t == "off" || t == "0") return false;
    fail(fmt::format("{}: '{}' is not a boolean", key, s));
}

std::vector<double> to_doubles(const std::string& s, const std::string& key) {
    std::vector<double> out;
    for (const auto& t : tokens(s)) out.push_back(to_double(t, key));
    return out;
}

/// One INI section; tracks which keys were read so leftovers can be rejected.
class Section {
  public:
    Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        if (!tree_) return std::nullopt;
        auto it = tree_->find(key);
        if (it == tree_->not_found()) return std::nullopt;
        return trim(it->second.data());
    }
    std::string full(const std::string& key) const { return name_ + "." + key; }

    double real(const std::string& key, double def) {
        auto v = raw(key);
        return v ? to_double(*v, full(key)) : def;
    }
    template <class T>
    T integer(const std::string& key, T def) {
        auto v = raw(key);
        return v ? to_integer<T>(*v, full(key)) : def;
    }
    bool boolean(const std::string& key, bool def) {
        auto v = raw(key);
        return v ? to_bool(*v, full(key)) : def;
    }
    std::string text(const std::string& key, const std::string& def) {
        auto v = raw(key);
        return v ? *v : def;
    }

    void reject_unknown() const {
        if (!tree_) return;
        for (const auto& [k, child] : *tree_) {
            if (!child.empty()) fail(fmt::format("nested key {} not supported", full(k)));
            if (!used_.count(k)) fail(fmt::format("unknown key {}", full(k)));
        }
    }

  private:
    const pt::ptree* tree_;
    std::string name_;
    std::set<std::string> used_;
};

void require(bool ok, const std::string& msg) {
    if (!ok) fail(msg);
}

std::string fmt_real(double v) { return fmt::format("{}", v); }

std::string fmt_reals(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt_real(v[i]);
    return s;
}

std::string fmt_vec(const Vec& v) {
    std::string s;
    for (int i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt_real(v[i]);
    return s;
}

std::string file_digest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::Config, fmt::format("cannot open points file {}", path));
    std::ostringstream ss;
    ss << is.rdbuf();
    return sha256_hex(ss.str());
}

}  // namespace

Rational parse_rational(const std::string& in) {
    const std::string s = trim(in);
    if (s.empty()) fail("empty number");
    auto slash = s.find('/');
    if (slash != std::string::npos) {
        Rational num = parse_rational(s.substr(0, slash));
        Rational den = parse_rational(s.substr(slash + 1));
        if (den == 0) fail(fmt::format("'{}' divides by zero", s));
        return num / den;
    }
    // sign, digits, optional fraction, optional exponent
    std::size_t i = 0;
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') neg = s[i++] == '-';
    boost::multiprecision::cpp_int mant = 0;
    int scale = 0;
    bool any = false;
    for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i, any = true) mant = mant * 10 + (s[i] - '0');
    if (i < s.size() && s[i] == '.') {
        for (++i; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i, any = true) {
            mant = mant * 10 + (s[i] - '0');
            --scale;
        }
    }
    if (!any) fail(fmt::format("'{}' is not a number", s));
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        scale += to_integer<int>(s.substr(i + 1), s);
        i = s.size();
    }
    if (i != s.size()) fail(fmt::format("'{}' is not a number", s));
    if (std::abs(scale) > 300) fail(fmt::format("'{}' is out of range", s));
    boost::multiprecision::cpp_int p10 = boost::multiprecision::pow(boost::multiprecision::cpp_int(10), std::abs(scale));
    Rational r = scale >= 0 ? Rational(mant * p10) : Rational(mant, p10);
    return neg ? Rational(-r) : r;
}

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
    pt::ptree root;
    try {
        std::istringstream is(text);
        pt::read_ini(is, root);
    } catch (const pt::ini_parser_error& e) {
        fail(fmt::format("config syntax: {}", e.message()));
    }
    static const std::set<std::string> known = {"system", "norm", "budget", "measure", "density", "render", "probe", "run"};
    for (const auto& [name, child] : root) {
        if (!known.count(name)) fail(fmt::format("unknown section [{}]", name));
        if (child.empty() && !child.data().empty()) fail(fmt::format("key {} outside any section", name));
    }
    auto section = [&](const char* name) {
        auto it = root.find(name);
        return Section(it == root.not_found() ? nullptr : &it->second, name);
    };

    RunConfig c;

    Section sys = section("system");
    {
        auto m = sys.raw("matrix");
        require(m.has_value(), "system.matrix is required");
        auto rows = split(*m, ';');
        const int n = static_cast<int>(rows.size());
        require(n >= 1 && n <= kMaxDim, fmt::format("system.matrix: dimension must be 1..{}", kMaxDim));
        for (const auto& row : rows) {
            auto t = tokens(row);
            require(static_cast<int>(t.size()) == n, "system.matrix must be square, rows separated by ';'");
            for (const auto& x : t) c.matrix.push_back(parse_rational(x));
        }
        c.dim = sys.integer<int>("dim", n);
        require(c.dim == n, "system.dim does not match the matrix");

        auto d = sys.raw("digits");
        require(d.has_value(), "system.digits is required");
        for (const auto& digit : split(*d, ';')) {
            auto t = tokens(digit);
            require(static_cast<int>(t.size()) == n,
                    fmt::format("system.digits: each digit needs {} coordinates, digits separated by ';'", n));
            std::vector<Rational> v;
            for (const auto& x : t) v.push_back(parse_rational(x));
            c.digits.push_back(std::move(v));
        }
        require(c.digits.size() >= 2, "system.digits needs at least two digits");

        auto mode = sys.raw("mode");
        require(mode.has_value(), "system.mode is required (exact-integer, exact-rational or float)");
        c.mode = parse_arithmetic_mode(*mode);
        c.tau = sys.real("tau", c.tau);
        c.theta = sys.real("theta", c.theta);
        c.eps_spec = sys.real("eps_spec", c.eps_spec);
        require(c.tau >= 0.0, "system.tau must be non-negative");
        require(c.eps_spec >= 0.0, "system.eps_spec must be non-negative");
        sys.reject_unknown();
    }

    Section run = section("run");
    c.seed = run.integer<std::uint64_t>("seed", c.seed);
    c.threads = run.integer<int>("threads", c.threads);
    c.out = run.text("out", c.out);
    require(c.threads >= 0, "run.threads must be non-negative");
    run.reject_unknown();

    Section nrm = section("norm");
    c.variant = parse_norm_variant(nrm.text("variant", to_string(c.variant)));
    c.norm.delta = nrm.real("delta", c.norm.delta);
    c.norm.grid_points = nrm.integer<int>("grid_points", c.norm.grid_points);
    c.norm.quad_nodes = nrm.integer<int>("quad_nodes", c.norm.quad_nodes);
    c.norm.mc_nodes = nrm.integer<int>("mc_nodes", c.norm.mc_nodes);
    c.norm.interp_cap = nrm.real("interp_cap", c.norm.interp_cap);
    c.norm.interp_checks = nrm.integer<int>("interp_checks", c.norm.interp_checks);
    c.norm.diam_tol = nrm.real("diam_tol", c.norm.diam_tol);
    c.norm.diam_splits = nrm.integer<int>("diam_splits", c.norm.diam_splits);
    c.norm.similarity_tol = nrm.real("similarity_tol", c.norm.similarity_tol);
    c.calibration_samples = nrm.integer<int>("calibration_samples", c.calibration_samples);
    if (auto v = nrm.raw("lambda_eps")) c.lambda_eps = to_doubles(*v, "norm.lambda_eps");
    c.fit_eps = nrm.real("fit_eps", c.fit_eps);
    c.fit_samples = nrm.integer<int>("fit_samples", c.fit_samples);
    c.fit_cap = nrm.real("fit_cap", c.fit_cap);
    c.norm.seed = c.seed;
    require(c.norm.delta > 0.0 && c.norm.delta < 0.5, "norm.delta must lie in (0, 1/2)");
    require(c.norm.grid_points >= 0 && c.norm.quad_nodes >= 0 && c.norm.mc_nodes > 0, "norm grid sizes out of range");
    require(c.norm.interp_checks >= 0 && c.norm.diam_splits > 0 && c.norm.diam_tol > 0.0, "norm tolerances out of range");
    require(c.calibration_samples > 0 && c.fit_samples > 0 && c.fit_cap > 0.0, "norm calibration sizes out of range");
    for (double e : c.lambda_eps) require(e > 0.0, "norm.lambda_eps entries must be positive");
    nrm.reject_unknown();

    Section bud = section("budget");
    c.max_depth = bud.integer<int>("max_depth", c.max_depth);
    c.point_budget = bud.integer<std::uint64_t>("point_budget", c.point_budget);
    c.state_budget = bud.integer<std::uint64_t>("state_budget", c.state_budget);
    require(c.max_depth >= 1, "budget.max_depth must be positive");
    bud.reject_unknown();

    Section mea = section("measure");
    c.depth = mea.integer<int>("depth", c.depth);
    c.sweep.family = parse_window_family(mea.text("family", to_string(c.sweep.family)));
    c.sweep.substeps = mea.integer<int>("substeps", c.sweep.substeps);
    c.sweep.levels = mea.integer<int>("levels", c.sweep.levels);
    c.sweep.periods = mea.integer<int>("periods", c.sweep.periods);
    c.sweep.max_anchors = mea.integer<std::size_t>("max_anchors", c.sweep.max_anchors);
    c.sweep.max_ball_anchors = mea.integer<std::size_t>("max_ball_anchors", c.sweep.max_ball_anchors);
    c.sweep.max_windows = mea.integer<std::size_t>("max_windows", c.sweep.max_windows);
    c.sweep.ball_visit_cap = mea.integer<std::size_t>("ball_visit_cap", c.sweep.ball_visit_cap);
    c.sweep.diam_grid = mea.real("diam_grid", c.sweep.diam_grid);
    c.amplify_folds = mea.integer<int>("amplify_folds", c.amplify_folds);
    c.amplify_half_width = mea.real("amplify_half_width", c.amplify_half_width);
    c.rounding = mea.real("rounding", c.rounding);
    require(c.depth >= 1 && c.depth <= 63, "measure.depth must lie in 1..63");
    require(c.sweep.substeps >= 1 && c.sweep.levels >= 0 && c.sweep.periods >= 1, "measure schedule out of range");
    require(c.sweep.diam_grid > 0.0, "measure.diam_grid must be positive");
    require(c.amplify_folds >= 1 && c.amplify_half_width > 0.0 && c.rounding >= 0.0, "measure amplification out of range");
    mea.reject_unknown();

    const int n = c.dim;
    Section den = section("density");
    if (auto v = den.raw("trace_points"); v && !v->empty()) {
        for (const auto& p : split(*v, ';')) {
            auto xs = to_doubles(p, "density.trace_points");
            require(static_cast<int>(xs.size()) == n, "density.trace_points: wrong coordinate count");
            c.trace_points.push_back(Eigen::Map<const Eigen::VectorXd>(xs.data(), n));
        }
    }
    if (auto v = den.raw("trace_radii")) c.trace_radii = to_doubles(*v, "density.trace_radii");
    for (double r : c.trace_radii) require(r > 0.0, "density.trace_radii must be positive");
    c.dim_depth = den.integer<int>("dim_depth", c.dim_depth);
    c.dim_tol = den.real("dim_tol", c.dim_tol);
    c.conv_depth = den.integer<int>("conv_depth", c.conv_depth);
    c.conv_samples = den.integer<std::uint64_t>("conv_samples", c.conv_samples);
    if (auto v = den.raw("conv_windows"); v && !v->empty()) {
        for (const auto& wdef : split(*v, ';')) {
            auto xs = to_doubles(wdef, "density.conv_windows");
            require(static_cast<int>(xs.size()) == 2 * n, "density.conv_windows: each window is lo1 hi1 ... lon hin");
            Box b{Vec(n), Vec(n)};
            for (int a = 0; a < n; ++a) {
                b.lo[a] = xs[2 * a];
                b.hi[a] = xs[2 * a + 1];
            }
            require(!b.empty(), "density.conv_windows: lo exceeds hi");
            c.conv_windows.push_back(b);
        }
    }
    require(c.dim_depth >= 0 && c.dim_tol >= 0.0, "density dimension settings out of range");
    require(c.conv_depth >= 0 && c.conv_samples >= 2, "density convolution settings out of range");
    den.reject_unknown();

    Section ren = section("render");
    c.render_depth = ren.integer<int>("depth", c.render_depth);
    c.render_source = ren.text("source", c.render_source);
    c.render_samples = ren.integer<std::uint64_t>("samples", c.render_samples);
    c.width = ren.integer<int>("width", c.width);
    c.height = ren.integer<int>("height", c.height);
    c.format = ren.text("format", c.format);
    c.raster = ren.boolean("raster", c.raster);
    require(c.render_source == "cloud" || c.render_source == "chaos", "render.source must be cloud or chaos");
    require(c.format == "pgm" || c.format == "ppm", "render.format must be pgm or ppm");
    require(c.width >= 1 && c.width <= 16384 && c.height >= 1 && c.height <= 16384, "render size must lie in 1..16384");
    require(c.render_depth >= 0 && c.render_samples >= 1, "render depth or samples out of range");
    ren.reject_unknown();

    Section prb = section("probe");
    if (auto v = prb.raw("points"); v && !v->empty()) {
        fs::path p(*v);
        if (p.is_relative()) p = fs::path(base_dir) / p;
        c.points_file = p.lexically_normal().string();
        c.points_digest = file_digest(c.points_file);
    }
    c.v_samples = prb.integer<int>("samples", c.v_samples);
    c.pairs = prb.boolean("pairs", c.pairs);
    require(c.v_samples >= 0, "probe.samples must be non-negative");
    prb.reject_unknown();

    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(fmt::format("cannot read config file {}", path));
    std::ostringstream ss;
    ss << is.rdbuf();
    fs::path base = fs::path(path).parent_path();
    return parse_config(ss.str(), base.empty() ? "." : base.string());
}

std::string canonical_text(const RunConfig& c) {
    std::string s;
    auto kv = [&](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
    s += "[system]\n";
    kv("dim", std::to_string(c.dim));
    {
        std::string m;
        for (int r = 0; r < c.dim; ++r) {
            if (r) m += "; ";
            for (int col = 0; col < c.dim; ++col) m += (col ? " " : "") + c.matrix[r * c.dim + col].str();
        }
        kv("matrix", m);
        std::string d;
        for (std::size_t i = 0; i < c.digits.size(); ++i) {
            if (i) d += "; ";
            for (int a = 0; a < c.dim; ++a) d += (a ? " " : "") + c.digits[i][a].str();
        }
        kv("digits", d);
    }
    kv("mode", to_string(c.mode));
    kv("tau", fmt_real(c.tau));
    kv("theta", fmt_real(c.theta));
    kv("eps_spec", fmt_real(c.eps_spec));

    s += "[norm]\n";
    kv("variant", to_string(c.variant));
    kv("delta", fmt_real(c.norm.delta));
    kv("grid_points", std::to_string(c.norm.grid_points));
    kv("quad_nodes", std::to_string(c.norm.quad_nodes));
    kv("mc_nodes", std::to_string(c.norm.mc_nodes));
    kv("interp_cap", fmt_real(c.norm.interp_cap));
    kv("interp_checks", std::to_string(c.norm.interp_checks));
    kv("diam_tol", fmt_real(c.norm.diam_tol));
    kv("diam_splits", std::to_string(c.norm.diam_splits));
    kv("similarity_tol", fmt_real(c.norm.similarity_tol));
    kv("calibration_samples", std::to_string(c.calibration_samples));
    kv("lambda_eps", fmt_reals(c.lambda_eps));
    kv("fit_eps", fmt_real(c.fit_eps));
    kv("fit_samples", std::to_string(c.fit_samples));
    kv("fit_cap", fmt_real(c.fit_cap));

    s += "[budget]\n";
    kv("max_depth", std::to_string(c.max_depth));
    kv("point_budget", std::to_string(c.point_budget));
    kv("state_budget", std::to_string(c.state_budget));

    s += "[measure]\n";
    kv("depth", std::to_string(c.depth));
    kv("family", to_string(c.sweep.family));
    kv("substeps", std::to_string(c.sweep.substeps));
    kv("levels", std::to_string(c.sweep.levels));
    kv("periods", std::to_string(c.sweep.periods));
    kv("max_anchors", std::to_string(c.sweep.max_anchors));
    kv("max_ball_anchors", std::to_string(c.sweep.max_ball_anchors));
    kv("max_windows", std::to_string(c.sweep.max_windows));
    kv("ball_visit_cap", std::to_string(c.sweep.ball_visit_cap));
    kv("diam_grid", fmt_real(c.sweep.diam_grid));
    kv("amplify_folds", std::to_string(c.amplify_folds));
    kv("amplify_half_width", fmt_real(c.amplify_half_width));
    kv("rounding", fmt_real(c.rounding));

    s += "[density]\n";
    {
        std::string t;
        for (std::size_t i = 0; i < c.trace_points.size(); ++i) t += (i ? "; " : "") + fmt_vec(c.trace_points[i]);
        kv("trace_points", t);
    }
    kv("trace_radii", fmt_reals(c.trace_radii));
    kv("dim_depth", std::to_string(c.dim_depth));
    kv("dim_tol", fmt_real(c.dim_tol));
    kv("conv_depth", std::to_string(c.conv_depth));
    kv("conv_samples", std::to_string(c.conv_samples));
    {
        std::string t;
        for (std::size_t i = 0; i < c.conv_windows.size(); ++i) {
            if (i) t += "; ";
            for (int a = 0; a < c.dim; ++a)
                t += (a ? " " : "") + fmt_real(c.conv_windows[i].lo[a]) + " " + fmt_real(c.conv_windows[i].hi[a]);
        }
        kv("conv_windows", t);
    }

    s += "[render]\n";
    kv("depth", std::to_string(c.render_depth));
    kv("source", c.render_source);
    kv("samples", std::to_string(c.render_samples));
    kv("width", std::to_string(c.width));
    kv("height", std::to_string(c.height));
    kv("format", c.format);
    kv("raster", c.raster ? "true" : "false");

    s += "[probe]\n";
    kv("points_sha256", c.points_digest);
    kv("samples", std::to_string(c.v_samples));
    kv("pairs", c.pairs ? "true" : "false");

    s += "[run]\n";
    kv("seed", std::to_string(c.seed));
    return s;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), md);
    std::string out;
    for (unsigned char b : md) out += fmt::format("{:02x}", b);
    return out;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_text(cfg)).substr(0, 16); }

ExpandingSystem build_system(const RunConfig& c) {
    SpectralOptions so;
    so.eps_spec = c.eps_spec;
    if (c.mode == ArithmeticMode::Float) {
        const int n = c.dim;
        Mat m(n, n);
        for (int r = 0; r < n; ++r)
            for (int col = 0; col < n; ++col) m(r, col) = static_cast<double>(c.matrix[r * n + col]);
        std::vector<Vec> digits;
        for (const auto& d : c.digits) {
            Vec v(n);
            for (int a = 0; a < n; ++a) v[a] = static_cast<double>(d[a]);
            digits.push_back(v);
        }
        return ExpandingSystem::create(spectral_data(m, so), std::move(digits), c.mode, c.tau, c.theta);
    }
    return ExpandingSystem::create_exact(c.dim, c.matrix, c.digits, c.mode, c.tau, c.theta, so);
}

}  // namespace selfaffine::cli
