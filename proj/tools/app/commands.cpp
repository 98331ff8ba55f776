#include "app/commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "app/report.hpp"
#include "selfaffine/expansion_io.hpp"

namespace selfaffine::cli {

namespace {

namespace fs = std::filesystem;

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out) / name).string(); }

std::string matrix_key(const RunConfig& c) {
    std::string s = fmt::format("dim={}\nmatrix=", c.dim);
    for (const auto& r : c.matrix) s += r.str() + " ";
    return s + "\n";
}

std::string word_text(const Word& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? " " : "") + std::to_string(w[i]);
    return s;
}

/// Digit values of a word, position j first; vectors in parentheses.
std::string word_digits(const ExpandingSystem& sys, const Word& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const Vec& d = sys.digits()[static_cast<std::size_t>(w[i])];
        s += (i ? " " : "") + (d.size() == 1 ? num(d[0]) : "(" + num(d, ",") + ")");
    }
    return s;
}

/// Mollified grids come from out/cache when an entry with the same content
/// key exists; the grid bytes fully determine the norm, so hits and misses
/// give identical results.
PseudoNorm make_norm(const ExpandingSystem& sys, const RunConfig& cfg, std::ostream& log) {
    if (cfg.variant != NormVariant::Mollified) return PseudoNorm::build(sys, cfg.variant, cfg.norm);
    std::string key = "norm-grid v1\n" + matrix_key(cfg) +
                      fmt::format("theta={}\neps_spec={}\ndelta={}\ngrid_points={}\nquad_nodes={}\n", cfg.theta,
                                  cfg.eps_spec, cfg.norm.delta, cfg.norm.grid_points, cfg.norm.quad_nodes);
    if (cfg.dim > 3) key += fmt::format("mc_nodes={}\nseed={}\n", cfg.norm.mc_nodes, cfg.seed);
    const std::string path = out_path(cfg, "cache/norm-" + sha256_hex(key).substr(0, 16) + ".grid");
    if (fs::exists(path)) {
        try {
            GridFile g = load_grid_file(path);
            if (g.variant == NormVariant::Mollified && g.delta == cfg.norm.delta && g.theta == sys.norm().theta() &&
                g.m == sys.norm().window() && g.grid.n == sys.dim()) {
                fmt::print(log, "norm grid: cache hit {}\n", path);
                return PseudoNorm::build(sys, cfg.variant, cfg.norm, &g.grid);
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Io) throw;
        }
        fmt::print(log, "norm grid: stale cache entry {}, rebuilding\n", path);
    }
    PseudoNorm w = PseudoNorm::build(sys, cfg.variant, cfg.norm);
    std::ostringstream os(std::ios::binary);
    write_grid_file(os, w.grid_file());
    write_file(path, os.str());
    fmt::print(log, "norm grid: built and cached {}\n", path);
    return w;
}

ExpansionSet make_dm(const ExpandingSystem& sys, const RunConfig& cfg, int depth, std::ostream& log) {
    std::string key = "expansion-set v1\n" + matrix_key(cfg) + "digits=";
    for (const auto& d : cfg.digits)
        for (const auto& x : d) key += x.str() + " ";
    key += fmt::format("\nmode={}\ntau={}\ndepth={}\n", to_string(cfg.mode), cfg.tau, depth);
    const std::string path = out_path(cfg, "cache/dm-" + sha256_hex(key).substr(0, 16) + ".bin");
    if (fs::exists(path)) {
        try {
            ExpansionSet e = load_expansion_set(path, sys);
            if (e.depth == depth) {
                fmt::print(log, "D_{}: cache hit {}\n", depth, path);
                return e;
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Io) throw;
        }
    }
    ExpansionSet e = enumerate_DM(sys, depth, cfg.point_budget);
    std::ostringstream os(std::ios::binary);
    write_expansion_set(os, sys, e);
    write_file(path, os.str());
    fmt::print(log, "D_{}: {} points, cached {}\n", depth, e.size(), path);
    return e;
}

OscOptions osc_options(const RunConfig& cfg) {
    OscOptions o;
    o.max_depth = cfg.max_depth;
    o.point_budget = cfg.point_budget;
    o.state_budget = cfg.state_budget;
    return o;
}

MeasureOptions measure_options(const RunConfig& cfg) {
    MeasureOptions o;
    o.sweep = cfg.sweep;
    o.osc = osc_options(cfg);
    o.amplify_folds = cfg.amplify_folds;
    o.amplify_half_width = cfg.amplify_half_width;
    o.rounding = cfg.rounding;
    o.budget = cfg.point_budget;
    return o;
}

CsvTable density_table(const std::string& hash, const DensityEstimate& d) {
    CsvTable t("density", hash,
               {"scale", "family", "level", "substep", "windows_swept", "sup_ratio", "sup_beyond", "sup_certified"});
    for (const auto& r : d.rows)
        t.row({num(r.scale), r.family, std::to_string(r.level), std::to_string(r.substep), std::to_string(r.windows),
               num(r.sup_ratio), num(r.sup_beyond), num(r.sup_certified)});
    return t;
}

void add_witness(Summary& s, const ExpandingSystem& sys, const CollisionWitness& w) {
    s.add("witness_depth", w.depth);
    s.add("witness_word_a", word_text(w.word_a));
    s.add("witness_word_b", word_text(w.word_b));
    s.add("witness_digits_a", word_digits(sys, w.word_a));
    s.add("witness_digits_b", word_digits(sys, w.word_b));
    s.add("witness_value_a", num(w.value_a));
    s.add("witness_value_b", num(w.value_b));
    s.add("witness_distance", w.distance);
    s.add("witness_exact", w.exact ? "true" : "false");
    s.add("witness_verified", verify_witness(sys, w) ? "true" : "false");
}

void add_bracket(Summary& s, const MeasureBracket& mb) {
    s.add("s", mb.s);
    s.add("depth", mb.depth);
    s.add("H_lo", mb.H_lo);
    s.add("H_hi", mb.H_hi);
    s.add("lo_method", mb.lo_method);
    s.add("hi_method", mb.hi_method);
    s.add("verdict", to_string(mb.verdict));
    s.add("root_diam_lo", mb.root_diam.lo);
    s.add("root_diam_hi", mb.root_diam.hi);
    s.add("density_best", mb.density.best);
    s.add("density_certified", mb.density.certified);
    s.add("density_lo_side", mb.density.lo_side);
    s.add("windows_swept", mb.density.windows);
    s.add("family", to_string(mb.density.family));
    if (mb.amplified) {
        s.add("amplify_folds", mb.amplified->folds);
        s.add("amplify_point", num(mb.amplified->point));
        s.add("amplify_multiplicity", mb.amplified->multiplicity);
        s.add("amplify_window_diam", mb.amplified->window_diam);
        s.add("amplify_density", mb.amplified->ratio);
    }
    for (std::size_t i = 0; i < mb.warnings.size(); ++i) s.add(fmt::format("warning_{}", i + 1), mb.warnings[i]);
}

void add_budgets(Summary& s, const RunConfig& cfg) {
    s.add("seed", cfg.seed);
    s.add("point_budget", cfg.point_budget);
    s.add("state_budget", cfg.state_budget);
    s.add("max_depth", cfg.max_depth);
}

/// Snaps a viewport edge to a nearby round value so exact lattice points
/// land in exact pixels despite the truncation tail of the support bound.
double snap(double v, double extent) {
    const double g = std::ldexp(1.0, std::ilogb(extent) - 24);
    const double r = std::round(v / g) * g;
    return std::abs(r - v) <= 1e-9 * extent ? r : v;
}

struct Viewport {
    Box box;
    std::array<double, 2> step{};
};

Viewport viewport_of(const ExpandingSystem& sys, const std::array<int, 2>& cells) {
    Viewport v;
    v.box = attractor_bbox(sys);
    for (int a = 0; a < sys.dim(); ++a) {
        double ext = v.box.hi[a] - v.box.lo[a];
        if (!(ext > 0.0)) {
            v.box.lo[a] -= 0.5;
            v.box.hi[a] += 0.5;
            ext = 1.0;
        }
        v.box.lo[a] = snap(v.box.lo[a], ext);
        v.box.hi[a] = snap(v.box.hi[a], ext);
        v.step[a] = (v.box.hi[a] - v.box.lo[a]) / cells[a];
    }
    return v;
}

/// Points within a relative 1e-9 below a pixel edge count as on it, so
/// lattice points whose coordinates round just short of an edge stay put.
long cell_of(double x, double lo, double hi, int cells) {
    long i = static_cast<long>(std::floor((x - lo) / (hi - lo) * cells + 1e-9));
    return std::clamp(i, 0L, static_cast<long>(cells) - 1);
}

std::array<unsigned char, 3> palette(double t) {
    static const std::array<std::array<double, 3>, 5> stops = {
        {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
    std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
    double f = t - static_cast<double>(i);
    std::array<unsigned char, 3> c{};
    for (int k = 0; k < 3; ++k) c[k] = static_cast<unsigned char>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
    return c;
}

std::vector<Vec> read_points(const std::string& path, int n) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::Config, fmt::format("cannot open points file {}", path));
    std::vector<Vec> out;
    std::string line;
    bool first = true;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        std::vector<std::string> toks;
        for (std::string t; ls >> t;) toks.push_back(t);
        if (toks.empty()) continue;
        std::vector<double> xs;
        bool numeric = true;
        for (const auto& t : toks) {
            try {
                std::size_t used = 0;
                xs.push_back(std::stod(t, &used));
                numeric = numeric && used == t.size();
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (!numeric && first) {  // header row
            first = false;
            continue;
        }
        first = false;
        if (!numeric || static_cast<int>(xs.size()) != n)
            throw Error(ErrorCode::Config, fmt::format("{}:{}: expected {} numbers", path, lineno, n));
        out.push_back(Eigen::Map<const Eigen::VectorXd>(xs.data(), n));
    }
    return out;
}

}  // namespace

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config:
        case ErrorCode::NotExpanding:
        case ErrorCode::Singular:
        case ErrorCode::HorizonExceeded:
        case ErrorCode::NotSimilarity:
        case ErrorCode::GridTooCoarse:
        case ErrorCode::UnsupportedDimension:
        case ErrorCode::PointNotOnAttractor: return kExitConfig;
        case ErrorCode::BudgetExceeded:
        case ErrorCode::StateBudgetExceeded: return kExitBudget;
        case ErrorCode::Io: return kExitIo;
        default: return kExitSoftware;
    }
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"check-osc", "measure", "render", "norm-probe", "density"};
    return names;
}

int cmd_check_osc(const RunConfig& cfg, std::ostream& log) {
    const ExpandingSystem sys = build_system(cfg);
    const std::string hash = config_hash(cfg);
    const OscVerdict v = decide_osc(sys, osc_options(cfg));

    Summary s("check-osc", hash);
    s.add("status", to_string(v.status));
    s.add("method", v.method);
    s.add("mode", to_string(sys.mode()));
    s.add("tau", sys.tau());
    s.add("depths_searched", v.depth_reached);
    s.add("state_bound", v.state_bound);
    s.add("reachable_states", v.reachable_states.size());
    s.add("discreteness_delta", v.discreteness_delta);
    if (v.witness) add_witness(s, sys, *v.witness);
    add_budgets(s, cfg);

    CsvTable trend("osc-trend", hash, {"depth", "words", "distinct", "min_separation"});
    for (const auto& r : v.trend)
        trend.row({std::to_string(r.depth), std::to_string(r.words), std::to_string(r.distinct), num(r.min_separation)});

    write_file(out_path(cfg, "osc_report.txt"), s.text(canonical_text(cfg)));
    write_file(out_path(cfg, "osc_trend.csv"), trend.text());

    fmt::print(log, "status: {} ({})\n", to_string(v.status), v.method);
    if (v.witness)
        fmt::print(log, "witness at depth {}: digits [{}] and [{}] (coefficient A^j at position j) both give ({})\n",
                   v.witness->depth, word_digits(sys, v.witness->word_a), word_digits(sys, v.witness->word_b),
                   num(v.witness->value_a));
    if (v.status == OscStatus::Holds)
        fmt::print(log, "certificate: {} reachable difference states, discreteness delta {}\n",
                   v.reachable_states.size(), num(v.discreteness_delta));
    if (v.status == OscStatus::Unknown) {
        fmt::print(log, "depth  words  distinct  min_separation\n");
        for (const auto& r : v.trend)
            fmt::print(log, "{:>5}  {:>5}  {:>8}  {}\n", r.depth, r.words, r.distinct, num(r.min_separation));
    }
    switch (v.status) {
        case OscStatus::Holds: return kExitHolds;
        case OscStatus::Fails: return kExitFails;
        default: return kExitUnknown;
    }
}

int cmd_measure(const RunConfig& cfg, std::ostream& log) {
    const ExpandingSystem sys = build_system(cfg);
    const std::string hash = config_hash(cfg);
    const PseudoNorm w = make_norm(sys, cfg, log);
    const ExpansionSet dm = make_dm(sys, cfg, cfg.depth, log);
    const MeasureBracket mb = measure_estimate(sys, w, cfg.depth, measure_options(cfg), &dm);

    Summary s("measure", hash);
    add_bracket(s, mb);
    if (mb.witness) add_witness(s, sys, *mb.witness);
    s.add("norm_variant", to_string(w.variant()));
    add_budgets(s, cfg);
    write_file(out_path(cfg, "measure_summary.txt"), s.text(canonical_text(cfg)));
    write_file(out_path(cfg, "density.csv"), density_table(hash, mb.density).text());

    fmt::print(log, "s = {}\nH in [{}, {}]\nverdict: {}\n", num(mb.s), num(mb.H_lo), num(mb.H_hi),
               to_string(mb.verdict));
    for (const auto& wmsg : mb.warnings) fmt::print(log, "warning: {}\n", wmsg);
    return 0;
}

int cmd_render(const RunConfig& cfg, std::ostream& log) {
    const ExpandingSystem sys = build_system(cfg);
    const std::string hash = config_hash(cfg);
    const int n = sys.dim();

    PointSet pts;
    std::string source_note;
    if (cfg.render_source == "cloud") {
        AttractorCloud cloud = attractor_cloud(sys, cfg.render_depth, cfg.point_budget);
        pts = std::move(cloud.points);
        source_note = fmt::format("cloud depth {} error radius {}", cfg.render_depth, num(cloud.err_radius));
    } else {
        const int trunc = chaos_truncation(sys, 1e-12);
        pts = chaos_game(sys, cfg.render_samples, trunc, cfg.seed, 0);
        source_note = fmt::format("chaos game {} samples truncation {}", cfg.render_samples, trunc);
    }
    auto weight = [&](std::size_t i) { return pts.weights.empty() ? 1.0 : pts.weights[i]; };

    std::vector<std::string> header;
    for (int a = 0; a < n; ++a) header.push_back(fmt::format("x{}", a + 1));
    header.push_back("weight");
    CsvTable csv("render-cloud", hash, header);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::string> row;
        for (int a = 0; a < n; ++a) row.push_back(num(pts.coords[i * n + a]));
        row.push_back(num(weight(i)));
        csv.row(row);
    }
    write_file(out_path(cfg, "cloud.csv"), csv.text());
    fmt::print(log, "{} points ({})\n", pts.size(), source_note);

    if (!cfg.raster) return 0;
    if (n > 2) throw Error(ErrorCode::UnsupportedDimension, fmt::format("raster output needs dimension 1 or 2, got {}", n));

    const int W = cfg.width, H = cfg.height;
    const bool color = cfg.format == "ppm";
    std::vector<double> mass(static_cast<std::size_t>(n == 1 ? W : W * H), 0.0);
    const Viewport vp = viewport_of(sys, {W, H});
    for (std::size_t i = 0; i < pts.size(); ++i) {
        long col = cell_of(pts.coords[i * n], vp.box.lo[0], vp.box.hi[0], W);
        long idx = col;
        if (n == 2) {
            long row = H - 1 - cell_of(pts.coords[i * n + 1], vp.box.lo[1], vp.box.hi[1], H);
            idx = row * W + col;
        }
        mass[static_cast<std::size_t>(idx)] += weight(i);
    }
    const double mmax = *std::max_element(mass.begin(), mass.end());

    std::string head = fmt::format("{}\n# selfaffine render config_hash={}\n# source {}\n", color ? "P6" : "P5", hash,
                                   source_note);
    std::vector<unsigned char> pix(static_cast<std::size_t>(W) * H * (color ? 3 : 1), 0);
    auto put = [&](std::size_t p, double t) {
        if (color) {
            auto c = palette(t);
            std::copy(c.begin(), c.end(), pix.begin() + static_cast<long>(3 * p));
        } else {
            pix[p] = static_cast<unsigned char>(1 + std::lround(254.0 * t));
        }
    };
    std::size_t occupied = 0;
    if (n == 1) {
        head += fmt::format("# viewport x [{}, {}]\n", num(vp.box.lo[0]), num(vp.box.hi[0]));
        head += fmt::format("# column i is the bin x in {} + [i, i+1) * {}; bar height = bin mass / {} of the rows\n",
                            num(vp.box.lo[0]), num(vp.step[0]), num(mmax));
        for (int c = 0; c < W; ++c) {
            if (mass[c] <= 0.0) continue;
            ++occupied;
            int bar = std::max(1, static_cast<int>(std::ceil(H * mass[c] / mmax - 1e-12)));
            for (int r = H - bar; r < H; ++r) put(static_cast<std::size_t>(r) * W + c, 1.0);
        }
    } else {
        head += fmt::format("# viewport x [{}, {}] y [{}, {}]\n", num(vp.box.lo[0]), num(vp.box.hi[0]),
                            num(vp.box.lo[1]), num(vp.box.hi[1]));
        head += fmt::format(
            "# pixel (col i, row j) covers x in {} + [i, i+1) * {}, y in {} - [j, j+1) * {}; "
            "intensity log(1 + mass) / log(1 + {})\n",
            num(vp.box.lo[0]), num(vp.step[0]), num(vp.box.hi[1]), num(vp.step[1]), num(mmax));
        const double lmax = std::log1p(mmax);
        for (std::size_t p = 0; p < mass.size(); ++p) {
            if (mass[p] <= 0.0) continue;
            ++occupied;
            put(p, std::log1p(mass[p]) / lmax);
        }
    }
    head += fmt::format("# occupied {}\n{} {}\n255\n", occupied, W, H);
    std::string img = head;
    img.append(reinterpret_cast<const char*>(pix.data()), pix.size());
    write_file(out_path(cfg, color ? "render.ppm" : "render.pgm"), img);
    fmt::print(log, "raster {}x{}: {} occupied {}\n", W, H, occupied, n == 1 ? "columns" : "pixels");
    return 0;
}

int cmd_norm_probe(const RunConfig& cfg, std::ostream& log) {
    const ExpandingSystem sys = build_system(cfg);
    const std::string hash = config_hash(cfg);
    const int n = sys.dim();
    PseudoNorm w = make_norm(sys, cfg, log);
    calibrate(w, cfg.calibration_samples, cfg.seed, cfg.lambda_eps);

    std::vector<Vec> points;
    if (!cfg.points_file.empty()) {
        points = read_points(cfg.points_file, n);
    } else {
        points.push_back(Vec::Zero(n));
        for (int i = 0; i < cfg.v_samples; ++i) {
            StreamRng rng(cfg.seed, 0x9B0BE, static_cast<std::uint64_t>(i));
            points.push_back(w.sample_V(rng));
        }
    }

    std::vector<std::string> header = {"index"};
    for (int a = 0; a < n; ++a) header.push_back(fmt::format("x{}", a + 1));
    header.push_back("w");
    if (cfg.pairs) {
        header.push_back("w_Ax");
        header.push_back("ratio");
    }
    header.push_back("in_V");
    CsvTable t("norm-probe", hash, header);
    const Mat& A = sys.matrix().entries();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec& x = points[i];
        std::vector<std::string> row = {std::to_string(i)};
        for (int a = 0; a < n; ++a) row.push_back(num(x[a]));
        const double wx = w(x);
        row.push_back(num(wx));
        if (cfg.pairs) {
            const double wax = w(Vec(A * x));
            row.push_back(num(wax));
            row.push_back(wx > 0.0 ? num(wax / wx) : "nan");
        }
        row.push_back(w.in_V(x) ? "1" : "0");
        t.row(row);
    }

    const NormConstants& c = w.constants();
    Summary s("norm-probe", hash);
    s.add("variant", to_string(w.variant()));
    s.add("q", w.q());
    s.add("scale", w.scale());
    s.add("theta", sys.norm().theta());
    s.add("window_m", sys.norm().window());
    s.add("p", c.p);
    s.add("j_lo", c.j_lo);
    s.add("j_hi", c.j_hi);
    s.add("alpha", c.alpha);
    s.add("upper_bound_V", static_cast<double>(c.p) * std::pow(w.q(), static_cast<double>(c.p) / n));
    s.add("w_min_V", c.w_min_V);
    s.add("w_max_V", c.w_max_V);
    s.add("w_hi_V", c.w_hi_V);
    s.add("lipschitz_V", c.lipschitz_V);
    s.add("interp_error", c.interp_error);
    s.add("beta_hat", c.beta_hat);
    for (const auto& [eps, lam] : c.lambda_eps) s.add(fmt::format("lambda_eps_{}", num(eps)), lam);
    try {
        const ComparabilityFit fit = comparability_fit(w, cfg.fit_eps, cfg.fit_samples, cfg.seed, cfg.fit_cap);
        s.add("fit_status", "ok");
        s.add("fit_C", fit.c_est);
        s.add("fit_exponent_lo", fit.exponent_lo);
        s.add("fit_exponent_hi", fit.exponent_hi);
        s.add("fit_slope_small", fit.slope_small);
        s.add("fit_slope_large", fit.slope_large);
        s.add("fit_samples", fit.samples);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::FitViolation) throw;
        s.add("fit_status", "violation");
        s.add("fit_message", e.what());
    }
    s.add("points", points.size());
    s.add("seed", cfg.seed);
    write_file(out_path(cfg, "probe.csv"), t.text());
    write_file(out_path(cfg, "norm_constants.txt"), s.text(canonical_text(cfg)));
    fmt::print(log, "{} points probed; p = {}, alpha = {}, beta_hat = {}\n", points.size(), c.p, num(c.alpha),
               num(c.beta_hat));
    return 0;
}

int cmd_density(const RunConfig& cfg, std::ostream& log) {
    const ExpandingSystem sys = build_system(cfg);
    const std::string hash = config_hash(cfg);
    const int n = sys.dim();
    const PseudoNorm w = make_norm(sys, cfg, log);
    const ExpansionSet dm = make_dm(sys, cfg, cfg.depth, log);
    const MeasureBracket mb = measure_estimate(sys, w, cfg.depth, measure_options(cfg), &dm);

    Summary s("density", hash);
    add_bracket(s, mb);

    std::vector<std::string> th = {"point"};
    for (int a = 0; a < n; ++a) th.push_back(fmt::format("x{}", a + 1));
    for (const char* k : {"radius", "value_lo", "value_hi", "windows", "cylinder_depth", "status"}) th.push_back(k);
    CsvTable trace("density-trace", hash, th);
    for (std::size_t p = 0; p < cfg.trace_points.size(); ++p) {
        const Vec& x = cfg.trace_points[p];
        std::vector<std::string> base = {std::to_string(p)};
        for (int a = 0; a < n; ++a) base.push_back(num(x[a]));
        try {
            ConvexDensityTrace tr = convex_density_trace(sys, w, x, mb.s, cfg.trace_radii, mb);
            for (const auto& e : tr.entries) {
                auto row = base;
                for (const auto& v : {num(e.radius), num(e.value.lo), num(e.value.hi), std::to_string(e.windows),
                                      std::to_string(e.cylinder_depth), std::string("ok")})
                    row.push_back(v);
                trace.row(row);
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::PointNotOnAttractor) throw;
            auto row = base;
            for (const auto& v : {std::string(""), std::string(""), std::string(""), std::string(""),
                                  std::string(""), std::string("not-on-attractor")})
                row.push_back(v);
            trace.row(row);
            s.add(fmt::format("trace_point_{}", p), "not on the attractor");
        }
    }

    const int dd = cfg.dim_depth > 0 ? cfg.dim_depth : cfg.depth;
    const DimEstimate de = dim_estimate(sys, w, dd, cfg.dim_tol, cfg.point_budget);
    s.add("dim_depth", de.depth);
    s.add("s_w_hat", de.s_w_hat);
    s.add("euclid_dim_hat", de.euclid_dim_hat);
    s.add("euclid_bound_lo", de.bound_lo);
    s.add("euclid_bound_hi", de.bound_hi);
    s.add("euclid_inside", de.inside ? "true" : "false");
    CsvTable dim("density-dimension", hash, {"kind", "log_scale", "log_count"});
    for (const auto& [x, y] : de.w_fit) dim.row({"pseudo", num(x), num(y)});
    for (const auto& [x, y] : de.e_fit) dim.row({"euclid", num(x), num(y)});

    CsvTable conv("density-convolution", hash,
                  {"window", "depth", "samples", "lhs", "lhs_se", "rhs", "rhs_se", "z", "density_mu", "density_conv"});
    std::vector<Box> windows = cfg.conv_windows;
    if (windows.empty()) windows.push_back(attractor_bbox(sys));
    for (std::size_t i = 0; i < windows.size(); ++i) {
        ConvolutionReport r = convolution_check(sys, cfg.conv_depth, ConvexWindow::axis_box(windows[i]),
                                                cfg.conv_samples, cfg.seed + i, &w, cfg.sweep);
        conv.row({std::to_string(i), std::to_string(cfg.conv_depth), std::to_string(r.samples), num(r.lhs),
                  num(r.lhs_se), num(r.rhs), num(r.rhs_se), num(r.z), num(r.density_mu), num(r.density_conv)});
    }
    add_budgets(s, cfg);

    write_file(out_path(cfg, "density_summary.txt"), s.text(canonical_text(cfg)));
    write_file(out_path(cfg, "density.csv"), density_table(hash, mb.density).text());
    write_file(out_path(cfg, "trace.csv"), trace.text());
    write_file(out_path(cfg, "dimension.csv"), dim.text());
    write_file(out_path(cfg, "convolution.csv"), conv.text());
    fmt::print(log, "H in [{}, {}]; s_w_hat = {}, euclid_dim_hat = {} (interval [{}, {}])\n", num(mb.H_lo),
               num(mb.H_hi), num(de.s_w_hat), num(de.euclid_dim_hat), num(de.bound_lo), num(de.bound_hi));
    return 0;
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log) {
    if (name == "check-osc") return cmd_check_osc(cfg, log);
    if (name == "measure") return cmd_measure(cfg, log);
    if (name == "render") return cmd_render(cfg, log);
    if (name == "norm-probe") return cmd_norm_probe(cfg, log);
    if (name == "density") return cmd_density(cfg, log);
    throw Error(ErrorCode::Config, fmt::format("unknown command '{}'", name));
}

int run_guarded(const std::string& name, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    try {
        return run_command(name, cfg, log);
    } catch (const Error& e) {
        fmt::print(err, "error [{}]: {}\n", to_string(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        fmt::print(err, "error [Io]: {}\n", e.what());
        return kExitIo;
    } catch (const std::bad_alloc&) {
        fmt::print(err, "error [BudgetExceeded]: out of memory\n");
        return kExitBudget;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitSoftware;
    }
}

}  // namespace selfaffine::cli
