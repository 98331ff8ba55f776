#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "app/commands.hpp"
#include "app/config.hpp"
#include "selfaffine/attractor.hpp"
#include "selfaffine/digits.hpp"
#include "selfaffine/measure_density.hpp"
#include "selfaffine/pseudo_norm.hpp"

namespace py = pybind11;
using namespace selfaffine;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

/// Numbers go through their Python text form, so ints and fraction strings
/// stay exact.
Rational to_rational(const py::handle& h) {
    if (py::isinstance<py::str>(h)) return cli::parse_rational(h.cast<std::string>());
    if (py::isinstance<py::bool_>(h)) throw Error(ErrorCode::Config, "booleans are not numbers");
    if (py::isinstance<py::int_>(h)) return cli::parse_rational(py::str(h).cast<std::string>());
    return cli::parse_rational(py::repr(py::float_(h.cast<double>())).cast<std::string>());
}

std::vector<Rational> row_of(const py::handle& h) {
    std::vector<Rational> out;
    if (py::isinstance<py::sequence>(h) && !py::isinstance<py::str>(h)) {
        for (auto x : h.cast<py::sequence>()) out.push_back(to_rational(x));
    } else {
        out.push_back(to_rational(h));
    }
    return out;
}

ExpandingSystem make_system(const py::object& matrix, const py::sequence& digits, const std::string& mode,
                            double tau, double theta) {
    cli::RunConfig c;
    std::vector<std::vector<Rational>> rows;
    if (py::isinstance<py::sequence>(matrix) && !py::isinstance<py::str>(matrix)) {
        for (auto r : matrix.cast<py::sequence>()) rows.push_back(row_of(r));
    } else {
        rows.push_back(row_of(matrix));
    }
    c.dim = static_cast<int>(rows.size());
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != c.dim) throw Error(ErrorCode::Config, "matrix must be square");
        c.matrix.insert(c.matrix.end(), r.begin(), r.end());
    }
    for (auto d : digits) {
        c.digits.push_back(row_of(d));
        if (static_cast<int>(c.digits.back().size()) != c.dim) throw Error(ErrorCode::Config, "digit dimension mismatch");
    }
    c.mode = parse_arithmetic_mode(mode);
    c.tau = tau;
    c.theta = theta;
    return cli::build_system(c);
}

Vec to_vec(const Array& a, int n) {
    if (a.ndim() != 1 || a.shape(0) != n) throw Error(ErrorCode::Config, "point has the wrong dimension");
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = a.at(i);
    return v;
}

Array points_array(const PointSet& p) {
    Array out({static_cast<py::ssize_t>(p.size()), static_cast<py::ssize_t>(p.n)});
    std::copy(p.coords.begin(), p.coords.end(), out.mutable_data());
    return out;
}

Array weights_array(const PointSet& p) {
    Array out(static_cast<py::ssize_t>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) out.mutable_data()[i] = p.weights.empty() ? 1.0 : p.weights[i];
    return out;
}

py::list vec_list(const Vec& v) {
    py::list l;
    for (int i = 0; i < v.size(); ++i) l.append(v[i]);
    return l;
}

py::dict witness_dict(const CollisionWitness& w) {
    py::dict d;
    d["depth"] = w.depth;
    d["word_a"] = w.word_a;
    d["word_b"] = w.word_b;
    d["value_a"] = vec_list(w.value_a);
    d["value_b"] = vec_list(w.value_b);
    d["distance"] = w.distance;
    d["exact"] = w.exact;
    return d;
}

}  // namespace

PYBIND11_MODULE(_selfaffine, m) {
    m.doc() = "Self-affine attractors, pseudo norms and pseudo Hausdorff measure brackets";

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
    error_type.call_once_and_store_result(
        [&]() { return py::object(py::exception<Error>(m, "SelfAffineError", PyExc_RuntimeError)); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error_type.get_stored(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    py::class_<ExpandingSystem>(m, "System")
        .def(py::init(&make_system), py::arg("matrix"), py::arg("digits"), py::arg("mode") = "exact-integer",
             py::arg("tau") = 1e-9, py::arg("theta") = 0.0,
             "Expanding matrix A (nested list or scalar) and digit set D. Numbers may be ints, floats or "
             "fraction strings such as '1/3'.")
        .def_property_readonly("dim", &ExpandingSystem::dim)
        .def_property_readonly("q", &ExpandingSystem::q)
        .def_property_readonly("digit_count", &ExpandingSystem::digit_count)
        .def_property_readonly("similarity_dimension", &ExpandingSystem::similarity_dimension)
        .def_property_readonly("mode", [](const ExpandingSystem& s) { return std::string(to_string(s.mode())); })
        .def_property_readonly("tau", &ExpandingSystem::tau)
        .def_property_readonly("digits",
                               [](const ExpandingSystem& s) {
                                   Array out({static_cast<py::ssize_t>(s.digit_count()),
                                              static_cast<py::ssize_t>(s.dim())});
                                   for (std::size_t i = 0; i < s.digit_count(); ++i)
                                       for (int a = 0; a < s.dim(); ++a)
                                           out.mutable_at(static_cast<py::ssize_t>(i), a) = s.digits()[i][a];
                                   return out;
                               })
        .def_property_readonly("matrix", [](const ExpandingSystem& s) {
            const int n = s.dim();
            Array out({n, n});
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) out.mutable_at(r, c) = s.matrix().entries()(r, c);
            return out;
        });

    py::class_<PseudoNorm>(m, "PseudoNorm")
        .def(py::init([](const ExpandingSystem& sys, const std::string& variant, double delta, int grid_points,
                         std::uint64_t seed) {
                 PseudoNormParams p;
                 p.delta = delta;
                 p.grid_points = grid_points;
                 p.seed = seed;
                 py::gil_scoped_release nogil;
                 return PseudoNorm::build(sys, parse_norm_variant(variant), p);
             }),
             py::arg("system"), py::arg("variant") = "mollified", py::arg("delta") = 0.25, py::arg("grid_points") = 0,
             py::arg("seed") = 1)
        .def_property_readonly("variant", [](const PseudoNorm& w) { return std::string(to_string(w.variant())); })
        .def_property_readonly("scale", &PseudoNorm::scale)
        .def("__call__", [](const PseudoNorm& w, const Array& x) { return w(to_vec(x, w.dim())); })
        .def("eval_many",
             [](const PseudoNorm& w, const Array& xs) {
                 if (xs.ndim() != 2 || xs.shape(1) != w.dim()) throw Error(ErrorCode::Config, "expected shape (k, n)");
                 Array out(xs.shape(0));
                 for (py::ssize_t i = 0; i < xs.shape(0); ++i) {
                     Vec v(w.dim());
                     for (int a = 0; a < w.dim(); ++a) v[a] = xs.at(i, a);
                     out.mutable_data()[i] = w(v);
                 }
                 return out;
             })
        .def("in_V", [](const PseudoNorm& w, const Array& x) { return w.in_V(to_vec(x, w.dim())); })
        .def("diam_box",
             [](const PseudoNorm& w, const Array& lo, const Array& hi) {
                 Bracket b = w.diam_box(Box{to_vec(lo, w.dim()), to_vec(hi, w.dim())});
                 return py::make_tuple(b.lo, b.hi);
             })
        .def_property_readonly("constants", [](const PseudoNorm& w) {
            const NormConstants& c = w.constants();
            py::dict d;
            d["p"] = c.p;
            d["alpha"] = c.alpha;
            d["w_min_V"] = c.w_min_V;
            d["w_max_V"] = c.w_max_V;
            d["w_hi_V"] = c.w_hi_V;
            d["interp_error"] = c.interp_error;
            d["beta_hat"] = c.beta_hat;
            return d;
        });

    m.def(
        "decide_osc",
        [](const ExpandingSystem& sys, int max_depth, std::uint64_t point_budget, std::uint64_t state_budget) {
            OscOptions o;
            o.max_depth = max_depth;
            o.point_budget = point_budget;
            o.state_budget = state_budget;
            OscVerdict v;
            {
                py::gil_scoped_release nogil;
                v = decide_osc(sys, o);
            }
            py::dict d;
            d["status"] = std::string(to_string(v.status));
            d["method"] = v.method;
            d["depth_reached"] = v.depth_reached;
            d["discreteness_delta"] = v.discreteness_delta;
            d["reachable_states"] = v.reachable_states.size();
            d["witness"] = v.witness ? py::object(witness_dict(*v.witness)) : py::object(py::none());
            py::list trend;
            for (const auto& r : v.trend) trend.append(py::make_tuple(r.depth, r.words, r.distinct, r.min_separation));
            d["trend"] = trend;
            return d;
        },
        py::arg("system"), py::arg("max_depth") = 12, py::arg("point_budget") = kDefaultPointBudget,
        py::arg("state_budget") = 10'000'000);

    m.def(
        "expansion_set",
        [](const ExpandingSystem& sys, int depth, std::uint64_t budget) {
            ExpansionSet e;
            {
                py::gil_scoped_release nogil;
                e = enumerate_DM(sys, depth, budget);
            }
            return py::make_tuple(points_array(e.points), weights_array(e.points));
        },
        py::arg("system"), py::arg("depth"), py::arg("budget") = kDefaultPointBudget,
        "Sorted distinct points of D_M and their multiplicities.");

    m.def(
        "attractor_cloud",
        [](const ExpandingSystem& sys, int depth, std::uint64_t budget) {
            AttractorCloud c;
            {
                py::gil_scoped_release nogil;
                c = attractor_cloud(sys, depth, budget);
            }
            return py::make_tuple(points_array(c.points), weights_array(c.points), c.err_radius);
        },
        py::arg("system"), py::arg("depth"), py::arg("budget") = kDefaultPointBudget);

    m.def(
        "chaos_game",
        [](const ExpandingSystem& sys, std::size_t count, std::uint64_t seed, std::uint64_t stream, double eps) {
            PointSet p;
            {
                py::gil_scoped_release nogil;
                p = chaos_game(sys, count, chaos_truncation(sys, eps), seed, stream);
            }
            return points_array(p);
        },
        py::arg("system"), py::arg("count"), py::arg("seed") = 1, py::arg("stream") = 0, py::arg("eps") = 1e-12);

    m.def(
        "measure_estimate",
        [](const ExpandingSystem& sys, const PseudoNorm& w, int depth, const std::string& family, int substeps,
           int levels) {
            MeasureOptions o;
            o.sweep.family = parse_window_family(family);
            o.sweep.substeps = substeps;
            o.sweep.levels = levels;
            MeasureBracket mb;
            {
                py::gil_scoped_release nogil;
                mb = measure_estimate(sys, w, depth, o);
            }
            py::dict d;
            d["s"] = mb.s;
            d["depth"] = mb.depth;
            d["H_lo"] = mb.H_lo;
            d["H_hi"] = mb.H_hi;
            d["verdict"] = std::string(to_string(mb.verdict));
            d["lo_method"] = mb.lo_method;
            d["hi_method"] = mb.hi_method;
            d["density_best"] = mb.density.best;
            d["windows"] = mb.density.windows;
            d["warnings"] = mb.warnings;
            d["amplified_density"] = mb.amplified ? py::object(py::float_(mb.amplified->ratio)) : py::object(py::none());
            py::list rows;
            for (const auto& r : mb.density.rows)
                rows.append(py::make_tuple(r.scale, r.family, r.windows, r.sup_ratio));
            d["rows"] = rows;
            return d;
        },
        py::arg("system"), py::arg("norm"), py::arg("depth"), py::arg("family") = "both", py::arg("substeps") = 4,
        py::arg("levels") = 8);

    m.def(
        "dim_estimate",
        [](const ExpandingSystem& sys, const PseudoNorm& w, int depth, double tol) {
            DimEstimate e;
            {
                py::gil_scoped_release nogil;
                e = dim_estimate(sys, w, depth, tol);
            }
            py::dict d;
            d["s_w_hat"] = e.s_w_hat;
            d["euclid_dim_hat"] = e.euclid_dim_hat;
            d["bounds"] = py::make_tuple(e.bound_lo, e.bound_hi);
            d["inside"] = e.inside;
            return d;
        },
        py::arg("system"), py::arg("norm"), py::arg("depth"), py::arg("tol") = 0.05);

    m.def(
        "config_hash", [](const std::string& path) { return cli::config_hash(cli::load_config(path)); },
        py::arg("path"));

    m.def(
        "run",
        [](const std::string& command, const std::string& config, std::optional<std::string> out,
           std::optional<std::uint64_t> seed, std::optional<int> threads) {
            cli::RunConfig cfg = cli::load_config(config);
            if (out) cfg.out = *out;
            if (seed) {
                cfg.seed = *seed;
                cfg.norm.seed = *seed;
            }
            if (threads) cfg.threads = *threads;
            if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
            std::ostringstream log, err;
            int code;
            {
                py::gil_scoped_release nogil;
                code = cli::run_guarded(command, cfg, log, err);
            }
            return py::make_tuple(code, log.str() + err.str());
        },
        py::arg("command"), py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
        py::arg("threads") = py::none(),
        "Runs a CLI command in-process; returns (exit code, log text).");
}
