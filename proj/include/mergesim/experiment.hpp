#pragma once

// Batch experiments: JSON spec parsing, grid expansion, parallel evaluation
// and CSV / JSON output.

#include "mergesim/hsw.hpp"
#include "mergesim/protocol.hpp"
#include "mergesim/typicality.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace mergesim {

inline constexpr int kSchemaVersion = 1;

/// Malformed or invalid experiment spec; the message names the field.
struct SpecError : ArgumentError {
    using ArgumentError::ArgumentError;
};

enum class ExperimentKind { Merge, HswSweep, RateAudit, Typicality };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::Merge: return "merge";
    case ExperimentKind::HswSweep: return "hsw_sweep";
    case ExperimentKind::RateAudit: return "rate_audit";
    case ExperimentKind::Typicality: return "typicality";
    }
    return "?";
}

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Merge;
    std::optional<StateVector> state;
    std::optional<Ensemble> ensemble;
    std::vector<double> distribution;
    std::vector<std::size_t> grid_n;
    std::vector<double> grid_delta;
    std::vector<std::size_t> grid_m;
    MergeMode mode = MergeMode::Plain;
    std::optional<std::size_t> m_z, m_x;
    TopUpPolicy top_up = TopUpPolicy::Auto;
    std::uint64_t seed = 1;
    std::size_t hash_samples = 8;
    SignalKind measurement = SignalKind::Weighted;
    std::string output = "mergesim";
    nlohmann::json source;  ///< the spec as read
};

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::size_t max_dim = std::size_t{1} << 20;
    bool exhaustive_branches = true;
    std::size_t workers = 1;
};

namespace detail {

[[noreturn]] inline void spec_fail(const std::string &field, const std::string &what) {
    throw SpecError("spec field '" + field + "': " + what);
}

template <class T>
T get_field(const nlohmann::json &j, const std::string &field) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception &e) {
        spec_fail(field, e.what());
    }
}

inline std::size_t get_count(const nlohmann::json &j, const std::string &field) {
    if (!j.is_number_integer() || j.get<long long>() < 0) spec_fail(field, "expected a non-negative integer");
    return j.get<std::size_t>();
}

inline std::optional<std::size_t> get_auto_count(const nlohmann::json &parent, const std::string &field) {
    if (!parent.contains(field)) return std::nullopt;
    const auto &j = parent.at(field);
    if (j.is_string() && j.get<std::string>() == "auto") return std::nullopt;
    return get_count(j, field);
}

inline StateVector parse_state(const nlohmann::json &j, const std::string &field) {
    StateVector s;
    try {
        s = state_from_json(j);
    } catch (const nlohmann::json::exception &e) {
        spec_fail(field, e.what());
    } catch (const ArgumentError &e) {
        spec_fail(field, e.what());
    }
    const double nrm = s.norm();
    if (std::abs(nrm - 1.0) > 1e-6) spec_fail(field, "state norm " + std::to_string(nrm) + " is not 1 within 1e-6");
    return s.normalized();
}

inline Ensemble parse_ensemble(const nlohmann::json &j) {
    if (!j.is_object() || !j.contains("weights") || !j.contains("states"))
        spec_fail("ensemble", "requires 'weights' and 'states'");
    const auto w = get_field<std::vector<double>>(j.at("weights"), "ensemble.weights");
    const auto &st = j.at("states");
    if (!st.is_array() || st.size() != w.size()) spec_fail("ensemble.states", "must be an array matching weights");
    Ensemble e;
    for (std::size_t i = 0; i < w.size(); ++i)
        e.entries.push_back({w[i], DensityOperator::from_pure(parse_state(st[i], "ensemble.states[" + std::to_string(i) + "]"))});
    try {
        e.validate();
    } catch (const ArgumentError &ex) {
        spec_fail("ensemble", ex.what());
    }
    return e;
}

template <class T>
std::vector<T> parse_grid(const nlohmann::json &grid, const std::string &key) {
    const std::string field = "grid." + key;
    if (!grid.contains(key)) spec_fail(field, "missing");
    const auto &g = grid.at(key);
    if (!g.is_array() || g.empty()) spec_fail(field, "must be a nonempty array");
    std::vector<T> out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const std::string f = field + "[" + std::to_string(i) + "]";
        if constexpr (std::is_same_v<T, std::size_t>) out.push_back(get_count(g[i], f));
        else {
            if (!g[i].is_number()) spec_fail(f, "expected a number");
            out.push_back(g[i].get<double>());
        }
    }
    return out;
}

/// Maps a byte offset in `text` to "line L, column C".
inline std::string text_position(const std::string &text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline ExperimentSpec parse_spec(const nlohmann::json &j) {
    using namespace detail;
    if (!j.is_object()) throw SpecError("spec must be a JSON object");
    ExperimentSpec s;
    s.source = j;
    if (!j.contains("schema_version")) spec_fail("schema_version", "missing");
    if (get_count(j.at("schema_version"), "schema_version") != kSchemaVersion)
        spec_fail("schema_version", "unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
    if (!j.contains("kind")) spec_fail("kind", "missing");
    const auto kind = get_field<std::string>(j.at("kind"), "kind");
    if (kind == "merge") s.kind = ExperimentKind::Merge;
    else if (kind == "hsw_sweep") s.kind = ExperimentKind::HswSweep;
    else if (kind == "rate_audit") s.kind = ExperimentKind::RateAudit;
    else if (kind == "typicality") s.kind = ExperimentKind::Typicality;
    else spec_fail("kind", "unknown kind '" + kind + "'");

    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0))
            spec_fail("seed", "expected a non-negative integer");
        s.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("output")) s.output = get_field<std::string>(j.at("output"), "output");
    if (j.contains("state")) s.state = parse_state(j.at("state"), "state");
    if (j.contains("ensemble")) s.ensemble = parse_ensemble(j.at("ensemble"));
    if (j.contains("distribution")) {
        s.distribution = get_field<std::vector<double>>(j.at("distribution"), "distribution");
        try {
            detail::check_distribution(s.distribution);
        } catch (const ArgumentError &e) {
            spec_fail("distribution", e.what());
        }
    }
    const nlohmann::json grid = j.contains("grid") ? j.at("grid") : nlohmann::json::object();
    if (!grid.is_object()) spec_fail("grid", "must be an object");

    switch (s.kind) {
    case ExperimentKind::Merge:
        if (!s.state) spec_fail("state", "required for kind 'merge'");
        s.grid_n = parse_grid<std::size_t>(grid, "n");
        s.grid_delta = parse_grid<double>(grid, "delta");
        break;
    case ExperimentKind::HswSweep:
        if (!s.ensemble) spec_fail("ensemble", "required for kind 'hsw_sweep'");
        s.grid_n = parse_grid<std::size_t>(grid, "n");
        s.grid_delta = parse_grid<double>(grid, "delta");
        s.grid_m = parse_grid<std::size_t>(grid, "m");
        break;
    case ExperimentKind::RateAudit:
        if (!s.state) spec_fail("state", "required for kind 'rate_audit'");
        s.grid_n = grid.contains("n") ? parse_grid<std::size_t>(grid, "n") : std::vector<std::size_t>{1};
        s.grid_delta = grid.contains("delta") ? parse_grid<double>(grid, "delta") : std::vector<double>{0.0};
        break;
    case ExperimentKind::Typicality:
        if (s.distribution.empty()) spec_fail("distribution", "required for kind 'typicality'");
        s.grid_n = parse_grid<std::size_t>(grid, "n");
        s.grid_delta = parse_grid<double>(grid, "delta");
        break;
    }
    for (std::size_t i = 0; i < s.grid_n.size(); ++i)
        if (s.grid_n[i] == 0) spec_fail("grid.n[" + std::to_string(i) + "]", "must be >= 1");
    for (std::size_t i = 0; i < s.grid_delta.size(); ++i)
        if (!(s.grid_delta[i] >= 0) || (s.kind != ExperimentKind::RateAudit && !(s.grid_delta[i] > 0)))
            spec_fail("grid.delta[" + std::to_string(i) + "]", "must be > 0");

    if (j.contains("mode")) {
        const auto m = get_field<std::string>(j.at("mode"), "mode");
        if (m == "plain") s.mode = MergeMode::Plain;
        else if (m == "pruned") s.mode = MergeMode::Pruned;
        else spec_fail("mode", "expected 'plain' or 'pruned'");
    }
    s.m_z = get_auto_count(j, "m_z");
    s.m_x = get_auto_count(j, "m_x");
    if (j.contains("top_up")) {
        const auto t = get_field<std::string>(j.at("top_up"), "top_up");
        if (t == "auto") s.top_up = TopUpPolicy::Auto;
        else if (t == "off") s.top_up = TopUpPolicy::Off;
        else spec_fail("top_up", "expected 'auto' or 'off'");
    }
    if (j.contains("hash_samples")) {
        s.hash_samples = get_count(j.at("hash_samples"), "hash_samples");
        if (s.hash_samples == 0) spec_fail("hash_samples", "must be >= 1");
    }
    if (j.contains("measurement")) {
        const auto m = get_field<std::string>(j.at("measurement"), "measurement");
        if (m == "pgm") s.measurement = SignalKind::Weighted;
        else if (m == "hsw") s.measurement = SignalKind::Smoothed;
        else spec_fail("measurement", "expected 'pgm' or 'hsw'");
    }
    return s;
}

/// Parses spec text; JSON syntax errors report line and column.
inline ExperimentSpec parse_spec_text(const std::string &text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        throw SpecError("spec parse error at " + detail::text_position(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
    }
    return parse_spec(j);
}

// ---------------------------------------------------------------------------
// Rows

/// CSV columns, in order, with their meaning. Empty cells are "not
/// applicable to this kind".
inline const std::vector<std::pair<std::string, std::string>> &csv_columns() {
    static const std::vector<std::pair<std::string, std::string>> cols = {
        {"schema_version", "output schema version"},
        {"kind", "merge | hsw_sweep | rate_audit | typicality"},
        {"n", "number of copies"},
        {"delta", "typicality slack"},
        {"m", "hash rows (hsw_sweep)"},
        {"seed", "seed used for codes / hashes"},
        {"mode", "plain | pruned (merge)"},
        {"S_A", "S(A) per copy"},
        {"S_A_given_B", "S(A|B) per copy"},
        {"I_A_R", "I(A:R) per copy"},
        {"S_Z_given_B", "S(Z^A|B) per copy"},
        {"S_X_given_CB", "S(X^A|CB) per copy"},
        {"phase_information", "S(R) - sum_k p_k S(phi_k^R) per copy"},
        {"m_z", "Z-type syndrome bits (merge)"},
        {"m_x", "X-type syndrome bits (merge)"},
        {"logical", "logical qubits of the code (merge)"},
        {"K_n", "classical bits sent"},
        {"E_cons", "ebits consumed by top-up"},
        {"E_prod", "ebits produced"},
        {"R_K", "K_n / n"},
        {"R_E", "(E_cons - E_prod) / n"},
        {"prune_probability", "typical-projection success probability N"},
        {"typical_dim", "typical set size D"},
        {"distance", "branch-weighted trace distance to the ideal output"},
        {"distance_worst", "worst branch trace distance"},
        {"distance_overall", "distance including pruning loss"},
        {"P_e", "mean decoding error over sampled hashes (hsw_sweep)"},
        {"P_e_stderr", "standard error of P_e over hashes"},
        {"epsilon", "measured mass defect"},
        {"r", "measured r"},
        {"d", "measured d"},
        {"lambda", "measured lambda"},
        {"conditions_ok", "1 if all five conditions hold against the i.i.d. bounds"},
        {"identity_gap", "largest rate-identity gap (rate_audit)"},
        {"typical_mass", "probability of the typical set (typicality)"},
        {"log2_dim_bound", "n(H+delta) (typicality)"},
    };
    return cols;
}

struct ResultRow {
    std::map<std::string, std::variant<std::string, double, std::int64_t>> cells;
    nlohmann::json report;  ///< full per-point report
};

namespace detail {

inline std::string format_cell(const std::variant<std::string, double, std::int64_t> &v) {
    if (const auto *s = std::get_if<std::string>(&v)) {
        if (s->find_first_of(",\"\r\n") == std::string::npos) return *s;
        std::string q = "\"";
        for (char c : *s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + "\"";
    }
    if (const auto *i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    const double d = std::get<double>(v);
    if (std::isnan(d)) return "";
    if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", d);
    return buf;
}

inline void put_entropies(ResultRow &row, const CopyEntropies &e) {
    row.cells["S_A"] = e.s_a;
    row.cells["S_A_given_B"] = e.s_a_given_b;
    row.cells["I_A_R"] = e.i_a_r;
    row.cells["S_Z_given_B"] = e.s_z_given_b;
    row.cells["S_X_given_CB"] = e.s_x_given_cb;
    row.cells["phase_information"] = e.phase_information;
}

inline std::int64_t as_int(std::size_t v) { return static_cast<std::int64_t>(v); }

}  // namespace detail

inline std::string to_csv(const std::vector<ResultRow> &rows) {
    std::string out;
    const auto &cols = csv_columns();
    for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c].first;
    out += "\r\n";
    for (const auto &r : rows) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c) out += ',';
            const auto it = r.cells.find(cols[c].first);
            if (it != r.cells.end()) out += detail::format_cell(it->second);
        }
        out += "\r\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct GridPoint {
    std::size_t n = 0;
    double delta = 0;
    std::optional<std::size_t> m;
};

inline std::vector<GridPoint> expand_grid(const ExperimentSpec &s) {
    std::vector<GridPoint> out;
    for (auto n : s.grid_n)
        for (auto d : s.grid_delta) {
            if (s.grid_m.empty()) out.push_back({n, d, std::nullopt});
            else
                for (auto m : s.grid_m) out.push_back({n, d, m});
        }
    return out;
}

/// Hash seeds for an hsw_sweep point; shared across m so that nested hash
/// rows compare like with like.
inline std::vector<std::uint64_t> hash_seeds(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 rng(seed);
    std::vector<std::uint64_t> out(count);
    for (auto &s : out) s = rng();
    return out;
}

inline ResultRow evaluate_point(const ExperimentSpec &s, const GridPoint &g, const RunOptions &opt) {
    const std::uint64_t seed = opt.seed.value_or(s.seed);
    ResultRow row;
    row.cells["schema_version"] = std::int64_t{kSchemaVersion};
    row.cells["kind"] = to_string(s.kind);
    row.cells["n"] = detail::as_int(g.n);
    row.cells["delta"] = g.delta;
    row.cells["seed"] = std::to_string(seed);
    if (g.m) row.cells["m"] = detail::as_int(*g.m);

    switch (s.kind) {
    case ExperimentKind::Merge: {
        MergeConfig cfg;
        cfg.state = *s.state;
        cfg.n = g.n;
        cfg.delta = g.delta;
        cfg.mode = s.mode;
        cfg.m_z = s.m_z;
        cfg.m_x = s.m_x;
        cfg.top_up = s.top_up;
        cfg.seed = seed;
        cfg.exhaustive_branches = opt.exhaustive_branches;
        cfg.max_dim = opt.max_dim;
        const auto r = run_merge(cfg);
        detail::put_entropies(row, r.entropies);
        row.cells["mode"] = to_string(r.mode);
        row.cells["m_z"] = detail::as_int(r.m_z);
        row.cells["m_x"] = detail::as_int(r.m_x);
        row.cells["logical"] = detail::as_int(r.logical);
        row.cells["K_n"] = r.k_bits;
        row.cells["E_cons"] = r.e_cons;
        row.cells["E_prod"] = r.e_prod;
        row.cells["R_K"] = r.rate_k;
        row.cells["R_E"] = r.rate_e;
        row.cells["prune_probability"] = r.prune_probability;
        if (r.mode == MergeMode::Pruned) row.cells["typical_dim"] = detail::as_int(r.typical_dim);
        row.cells["distance"] = r.distance;
        row.cells["distance_worst"] = r.distance_worst;
        row.cells["distance_overall"] = r.distance_overall;
        row.report = to_json(r);
        break;
    }
    case ExperimentKind::HswSweep: {
        const std::size_t q = s.ensemble->size();
        if (!is_prime(q)) throw ArgumentError("hsw_sweep: ensemble size " + std::to_string(q) + " must be prime");
        if (*g.m > g.n) throw ArgumentError("hsw_sweep: m = " + std::to_string(*g.m) + " exceeds n = " + std::to_string(g.n));
        const std::size_t dim = ipow(s.ensemble->entries.front().state.layout().total_dim(), g.n);
        if (dim > 4096 || dim * dim > opt.max_dim * 16)
            throw ResourceError("hsw_sweep: state dimension " + std::to_string(dim) + " exceeds cap");
        const Ensemble ens = iid_ensemble(*s.ensemble, g.n);
        const auto proj = hsw_projectors(*s.ensemble, g.n, g.delta);
        const auto factors = s.measurement == SignalKind::Weighted ? weighted_factors(ens) : smoothed_factors(proj);
        const auto est = error_probability(ens, g.n, *g.m, q, hash_seeds(seed, s.hash_samples), factors);
        const auto cond = check_conditions(proj.q_k(), proj.q.projector(), ens, proj.typical,
                                           iid_condition_bounds(*s.ensemble, g.n, g.delta));
        row.cells["P_e"] = est.mean;
        row.cells["P_e_stderr"] = est.standard_error;
        row.cells["epsilon"] = cond.epsilon;
        row.cells["r"] = cond.r;
        row.cells["d"] = cond.d;
        row.cells["lambda"] = cond.lambda;
        row.cells["conditions_ok"] = std::int64_t{cond.all_satisfied() ? 1 : 0};
        row.report = {{"P_e", est.mean}, {"P_e_stderr", est.standard_error}, {"P_e_per_hash", est.per_hash},
                      {"epsilon", cond.epsilon}, {"r", cond.r}, {"d", cond.d}, {"lambda", cond.lambda},
                      {"satisfied", cond.satisfied}, {"margin", cond.margin}};
        break;
    }
    case ExperimentKind::RateAudit: {
        const auto a = rate_audit(*s.state);
        detail::put_entropies(row, a.entropies);
        row.cells["identity_gap"] = a.max_gap();
        nlohmann::json rep = {{"entropies", to_json(a.entropies)},
                              {"gap_communication", a.gap_communication},
                              {"gap_entanglement", a.gap_entanglement},
                              {"gap_plain", a.gap_plain}};
        if (canonical_abr(*s.state).layout().dim(Label::A) == 2) {
            const auto c = classical_cost_compare(*s.state, g.n, g.delta);
            rep["K_plain"] = c.k_plain;
            rep["K_pruned"] = c.k_pruned;
            rep["n_I_A_R"] = c.n_mutual_information;
        }
        row.report = rep;
        break;
    }
    case ExperimentKind::Typicality: {
        const auto ts = typical_set(s.distribution, g.n, g.delta, std::min(opt.max_dim * 4, kDefaultEnumerationCap));
        row.cells["typical_dim"] = detail::as_int(ts.dim);
        row.cells["typical_mass"] = ts.prob_mass;
        row.cells["log2_dim_bound"] = ts.log2_dim_bound();
        row.report = {{"entropy", ts.entropy}, {"dim", ts.dim}, {"prob_mass", ts.prob_mass}, {"members", ts.members}};
        break;
    }
    }
    return row;
}

/// Error from one grid point, tagged with the point.
struct GridPointError : std::runtime_error {
    enum class Kind { Argument, Resource, Entanglement, Other } kind;
    GridPointError(Kind k, const std::string &msg) : std::runtime_error(msg), kind(k) {}
};

inline std::string describe(const GridPoint &g) {
    std::string s = "grid point (n=" + std::to_string(g.n);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", g.delta);
    s += ", delta=" + std::string(buf);
    if (g.m) s += ", m=" + std::to_string(*g.m);
    return s + ")";
}

/// Evaluates every grid point on up to opt.workers threads. Rows come back
/// in grid order. The first failing point (in grid order) is rethrown.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec &s, const RunOptions &opt) {
    const auto grid = expand_grid(s);
    std::vector<ResultRow> rows(grid.size());
    std::vector<std::optional<GridPointError>> errors(grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < grid.size();) {
            const std::string where = describe(grid[i]) + ": ";
            try {
                rows[i] = evaluate_point(s, grid[i], opt);
            } catch (const EntanglementRequired &e) {
                errors[i].emplace(GridPointError::Kind::Entanglement, where + e.what());
            } catch (const ResourceError &e) {
                errors[i].emplace(GridPointError::Kind::Resource, where + e.what());
            } catch (const ArgumentError &e) {
                errors[i].emplace(GridPointError::Kind::Argument, where + e.what());
            } catch (const std::exception &e) {
                errors[i].emplace(GridPointError::Kind::Other, where + e.what());
            }
        }
    };
    const std::size_t nw = std::max<std::size_t>(1, std::min(opt.workers, grid.size()));
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < nw; ++w) threads.emplace_back(worker);
    worker();
    for (auto &t : threads) t.join();
    for (auto &e : errors)
        if (e) throw *e;
    return rows;
}

inline nlohmann::json report_json(const ExperimentSpec &s, const std::vector<ResultRow> &rows, const RunOptions &opt) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto &r : rows) {
        nlohmann::json cells = nlohmann::json::object();
        for (const auto &[k, v] : r.cells) std::visit([&](const auto &x) { cells[k] = x; }, v);
        points.push_back({{"row", cells}, {"report", r.report}});
    }
    return {{"schema_version", kSchemaVersion},
            {"spec", s.source},
            {"options", {{"seed", opt.seed ? nlohmann::json(*opt.seed) : nlohmann::json(nullptr)},
                         {"max_dim", opt.max_dim},
                         {"exhaustive_branches", opt.exhaustive_branches}}},
            {"points", points}};
}

}  // namespace mergesim
