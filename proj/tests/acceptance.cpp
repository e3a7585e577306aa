// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only N]... [--known-failure N]...
//
// Exit status is 0 when every criterion passes or fails only where listed
// by --known-failure; a listed criterion that passes is reported but is not
// an error.

#include "mergesim/experiment.hpp"
#include "mergesim/protocol.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

using namespace mergesim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(3) << v;
    return s.str();
}

std::string list(const std::vector<double> &v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
    return "[" + out + "]";
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return (v[(v.size() - 1) / 2] + v[v.size() / 2]) / 2;
}

bool nonincreasing(const std::vector<double> &v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[i - 1] + 1e-12) return false;
    return true;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const double kS = 1.0 / std::sqrt(2.0);
const SubsystemLayout kAbr({{Label::A, 2}, {Label::B, 2}, {Label::R, 2}});

StateVector from_amps(std::initializer_list<std::pair<int, double>> amps) {
    CVector v = CVector::Zero(8);
    for (auto [i, a] : amps) v(i) = a;
    return {kAbr, v};
}

StateVector random_abr(std::size_t db, std::size_t dr, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SubsystemLayout l({{Label::A, 2}, {Label::B, db}, {Label::R, dr}});
    return {l, oracle::random_state(l.total_dim(), rng)};
}

CMatrix pure(double c, double s) {
    CVector v(2);
    v << c, s;
    return v * v.adjoint();
}

Ensemble two_state(double w0, double overlap) {
    const SubsystemLayout b({{Label::B, 2}});
    return {{{w0, DensityOperator(b, pure(1, 0))}, {1 - w0, DensityOperator(b, pure(overlap, std::sqrt(1 - overlap * overlap)))}}};
}

std::vector<std::uint64_t> seed_range(std::uint64_t from, std::size_t count) {
    std::vector<std::uint64_t> s(count);
    std::iota(s.begin(), s.end(), from);
    return s;
}

// ---------------------------------------------------------------------------
// 1. rate identities

Outcome entropy_identities() {
    const auto t0 = Clock::now();
    double worst = 0, worst_oracle = 0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        const std::size_t db = 2 + i % 2, dr = 2 + (i / 2) % 2;
        const auto s = random_abr(db, dr, 5000 + i);
        const auto a = rate_audit(s);
        worst = std::max(worst, a.max_gap());

        // the same identities against entropies from index-loop reductions
        const std::vector<std::size_t> dims{2, db, dr};
        auto h = [&](std::vector<std::size_t> keep) { return oracle::entropy(oracle::reduce(s.amplitudes(), dims, keep)); };
        const double sa = h({0}), sb = h({1}), sr = h({2}), sab = h({0, 1}), sar = h({0, 2});
        const double cond = sab - sb, mi = sa + sr - sar;
        const auto &e = a.entropies;
        worst_oracle = std::max({worst_oracle, std::abs(a.m_z_rate + a.m_x_pruned_rate - mi),
                                 std::abs(sa - a.m_z_rate - a.m_x_pruned_rate + cond),
                                 std::abs(1 - e.s_z_given_b - e.s_x_given_cb + cond)});
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-6 && worst_oracle <= 1e-6 && t <= 30,
            "200 states, max gap " + fmt(worst) + " (against loop entropies " + fmt(worst_oracle) + "), " + fmt(t) + " s"};
}

// ---------------------------------------------------------------------------
// 2. exact cases

Outcome exact_cases() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    const auto bell_ab = from_amps({{0, kS}, {6, kS}});
    double worst_ab = 0;
    for (std::size_t n : {2u, 3u}) {
        MergeConfig c;
        c.state = bell_ab;
        c.n = n;
        c.m_z = 0;
        c.m_x = 0;
        const auto r = run_merge(c);
        worst_ab = std::max(worst_ab, r.distance);
        ok = ok && r.distance <= 1e-8 && r.k_bits == 0 && r.e_prod == static_cast<double>(n);
    }
    detail += "Bell AB distance " + fmt(worst_ab);

    const double delta = 0.1;
    const auto bell_ar = from_amps({{0, kS}, {5, kS}});
    std::size_t decodable = 0, total = 0;
    double worst_ar = 0;
    for (std::size_t n : {1u, 2u}) {
        const auto want = static_cast<double>(std::ceil(static_cast<double>(n) * (1 + 2 * delta) - 1e-9));
        std::size_t seen = 0;
        for (std::uint64_t seed = 0; seed < 12; ++seed) {
            MergeConfig c;
            c.state = bell_ar;
            c.n = n;
            c.delta = delta;
            c.seed = seed;
            const auto r = run_merge(c);
            ok = ok && r.e_cons == want && top_up(bell_ar, n, delta).ebits == static_cast<std::size_t>(want);
            ++total;
            if (oracle::sees_original_digits(r.code, n)) {
                ++seen;
                worst_ar = std::max(worst_ar, r.distance);
            }
        }
        ok = ok && seen > 0;
        decodable += seen;
    }
    ok = ok && worst_ar <= 1e-6;
    const double t = seconds_since(t0);
    ok = ok && t <= 10;
    detail += ", Bell AR top-up ebits match, distance " + fmt(worst_ar) + " on " + std::to_string(decodable) + "/" +
              std::to_string(total) + " codes whose checks see every input digit, " + fmt(t) + " s";
    return {ok, detail};
}

// ---------------------------------------------------------------------------
// 3. covariance and controlled-phase inversion

Outcome covariance() {
    double worst_cov = 0, worst_inv = 0, worst_fourier = 0;
    std::size_t instances = 0;
    for (std::size_t n : {2u, 3u, 4u}) {
        for (auto [db, seed] : {std::pair<std::size_t, std::uint64_t>{2, 11}, {2, 12}, {3, 13}}) {
            if (n == 4 && db == 3) continue;
            const auto one = random_abr(db, 2, seed);
            const auto sf = schmidt_form(one, Label::A);
            const auto psi = tensor_power(apply_on(one, CMatrix(sf.basis.adjoint()), {Label::A}), n);
            const std::size_t dc = std::size_t{1} << n;
            const std::size_t dbr = psi.amplitudes().size() / dc;
            const auto dbn = static_cast<Eigen::Index>(psi.layout().dim(Label::B));
            const auto drn = static_cast<Eigen::Index>(psi.layout().dim(Label::R));

            // coherent copy A -> AC
            CVector copy = CVector::Zero(static_cast<Eigen::Index>(dc * dc * dbr));
            for (std::size_t a = 0; a < dc; ++a)
                copy.segment(static_cast<Eigen::Index>((a * dc + a) * dbr), static_cast<Eigen::Index>(dbr)) =
                    psi.amplitudes().segment(static_cast<Eigen::Index>(a * dbr), static_cast<Eigen::Index>(dbr));

            const auto src = plain_source(one, n, 1 << 20);
            CMatrix theta0 = CMatrix::Zero(static_cast<Eigen::Index>(dc) * dbn, drn);
            for (std::size_t c = 0; c < dc; ++c) theta0.middleRows(static_cast<Eigen::Index>(c) * dbn, dbn) = src.amp[c] * src.phi[c];

            const CMatrix f = fourier_digits(2, n);
            std::vector<CVector> varthetas;
            for (std::size_t x = 0; x < dc; ++x) {
                // <x~| on A with signs (-1)^{a·x}, scaled by sqrt(2^n)
                CVector xt(static_cast<Eigen::Index>(dc));
                for (std::size_t a = 0; a < dc; ++a) xt(static_cast<Eigen::Index>(a)) = (std::popcount(a & x) & 1) ? -1.0 : 1.0;
                xt /= std::sqrt(static_cast<double>(dc));
                worst_fourier = std::max(worst_fourier, (f.col(static_cast<Eigen::Index>(x)) - xt).cwiseAbs().maxCoeff());
                CVector vt = CVector::Zero(static_cast<Eigen::Index>(dc * dbr));
                for (std::size_t a = 0; a < dc; ++a)
                    vt += std::conj(xt(static_cast<Eigen::Index>(a))) *
                          copy.segment(static_cast<Eigen::Index>(a * dc * dbr), static_cast<Eigen::Index>(dc * dbr));
                vt *= std::sqrt(static_cast<double>(dc));
                varthetas.push_back(vt);

                CMatrix via = CMatrix::Zero(static_cast<Eigen::Index>(dc + 1) * dbn, drn);
                via.topRows(theta0.rows()) = theta0;
                detail::apply_c_phase(via, x, dc, static_cast<std::size_t>(dbn));
                CVector dense(static_cast<Eigen::Index>(dc * dbr));
                for (Eigen::Index row = 0; row < theta0.rows(); ++row)
                    for (Eigen::Index col = 0; col < drn; ++col) dense(row * drn + col) = via(row, col);
                worst_cov = std::max({worst_cov, (dense - vt).cwiseAbs().maxCoeff(),
                                      (via.bottomRows(dbn)).cwiseAbs().maxCoeff()});
            }

            // Σ_x |x>^D ϑ_x, inverse phase from D to C, must give |+>^D Ψ0
            SubsystemLayout dcbr({{Label::D, dc}, {Label::C, dc}, {Label::B, psi.layout().dim(Label::B)},
                                  {Label::R, psi.layout().dim(Label::R)}});
            CVector joint(static_cast<Eigen::Index>(dc * dc * dbr));
            for (std::size_t x = 0; x < dc; ++x)
                joint.segment(static_cast<Eigen::Index>(x * dc * dbr), static_cast<Eigen::Index>(dc * dbr)) = varthetas[x];
            const StateVector js(dcbr, joint / std::sqrt(static_cast<double>(dc)));
            const auto undone = controlled_z(js, Label::D, Label::C, 2, true);
            const auto redone = controlled_z(undone, Label::D, Label::C, 2);
            for (std::size_t x = 0; x < dc; ++x)
                worst_inv = std::max(worst_inv, (undone.amplitudes().segment(static_cast<Eigen::Index>(x * dc * dbr),
                                                                               static_cast<Eigen::Index>(dc * dbr)) *
                                                     std::sqrt(static_cast<double>(dc)) -
                                                 varthetas[0])
                                                    .cwiseAbs()
                                                    .maxCoeff());
            worst_inv = std::max(worst_inv, (redone.amplitudes() - js.amplitudes()).cwiseAbs().maxCoeff());
            ++instances;
        }
    }
    const double worst = std::max({worst_cov, worst_inv, worst_fourier});
    return {worst <= 1e-10, std::to_string(instances) + " instances up to n=4, covariance " + fmt(worst_cov) +
                                ", inversion " + fmt(worst_inv) + ", Fourier columns " + fmt(worst_fourier)};
}

// ---------------------------------------------------------------------------
// 4. pruning

Outcome pruning() {
    bool ok = true;
    double worst_overlap = 0, worst_eig = std::numeric_limits<double>::infinity();
    std::string dims;
    // Bob's per-copy states: one pure, one mixed and overlapping it
    const std::vector<CMatrix> phi{pure(1, 0), 0.5 * pure(0.6, 0.8) + 0.5 * pure(0, 1)};
    const double delta = 0.35;
    for (const std::vector<double> p : {std::vector<double>{0.9, 0.1}, std::vector<double>{0.7, 0.3}}) {
        for (std::size_t n : {4u, 6u, 8u}) {
            const auto ts = typical_set(p, n, delta);
            // Σ_k sqrt(p_k)|k>^A|k>^B already in Schmidt form
            const std::size_t d = std::size_t{1} << n;
            CVector v = CVector::Zero(static_cast<Eigen::Index>(d * d));
            for (std::size_t k = 0; k < d; ++k) {
                double pk = 1;
                for (std::size_t i = 0; i < n; ++i) pk *= p[(k >> (n - 1 - i)) & 1];
                v(static_cast<Eigen::Index>(k * d + k)) = std::sqrt(pk);
            }
            const StateVector psi(SubsystemLayout({{Label::A, d}, {Label::B, d}}), v);
            const auto pr = prune(psi, ts, Label::A);
            const double ov = std::abs(psi.amplitudes().dot(pr.state.amplitudes()));
            worst_overlap = std::max(worst_overlap, std::abs(ov - std::sqrt(ts.prob_mass)));

            const double bound = std::exp2(static_cast<double>(n) * (oracle::h2(p[1]) + delta));
            ok = ok && static_cast<double>(ts.dim) <= bound;
            dims += (dims.empty() ? "" : " ") + std::to_string(ts.dim) + "/" + fmt(bound);

            // (1/N)ϑ̄ - ϑ̄' is block diagonal over strings k; each block
            // is (p_k/N)(1 - [k typical]) ⊗_i φ_{k_i}, diagonalized densely
            double mn = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < d; ++k) {
                CMatrix block = CMatrix::Identity(1, 1);
                double pk = 1;
                for (std::size_t i = 0; i < n; ++i) {
                    const auto j = (k >> (n - 1 - i)) & 1;
                    pk *= p[j];
                    block = kron(block, phi[j]);
                }
                const double w = pk / ts.prob_mass - (ts.contains(k) ? pk / ts.prob_mass : 0.0);
                if (w == 0 && k > 0) continue;
                Eigen::SelfAdjointEigenSolver<CMatrix> es(w * block, Eigen::EigenvaluesOnly);
                mn = std::min(mn, es.eigenvalues().minCoeff());
            }
            if (n == 4) {
                const auto avgs = phase_averages(p, phi, n, delta);
                Eigen::SelfAdjointEigenSolver<CMatrix> es(CMatrix(avgs.average / avgs.prune_probability - avgs.average_pruned),
                                                          Eigen::EigenvaluesOnly);
                mn = std::min(mn, es.eigenvalues().minCoeff());
            }
            mn = std::min(mn, phase_average_gap(p, phi, n, delta));
            worst_eig = std::min(worst_eig, mn);
        }
    }
    ok = ok && worst_overlap <= 1e-10 && worst_eig >= -1e-10;
    return {ok, "overlap gap " + fmt(worst_overlap) + ", min eigenvalue " + fmt(worst_eig) + ", D vs bound " + dims};
}

// ---------------------------------------------------------------------------
// 5. HSW suite

Outcome hsw_suite() {
    const auto t0 = Clock::now();
    bool ok = true;
    double worst_complete = 0, worst_psd = 0, orth = 0;
    std::size_t monotone_fail = 0, cond_fail = 0;
    const double delta = 0.25;
    for (const auto &base : {two_state(0.5, 0.3), two_state(0.7, 0.5), two_state(0.5, 0.8)}) {
        for (std::size_t n : {3u, 4u, 5u}) {
            const auto ens = iid_ensemble(base, n);
            const auto proj = hsw_projectors(base, n, delta);
            const auto factors = weighted_factors(ens);
            const auto seeds = seed_range(900, 6);
            std::vector<double> prev;
            for (std::size_t m = 0; m <= n; ++m) {
                const auto f = sample_hash(n, m, 2, 900);
                for (const auto &meas : {build_measurement(ens, f, factors), build_measurement(ens, f, proj)})
                    for (std::size_t t = 0; t < f.syndrome_count(); ++t) {
                        const auto povm = meas.povm(t);
                        worst_complete = std::max(worst_complete, povm.completeness_defect());
                        worst_psd = std::max(worst_psd, -povm.min_eigenvalue());
                    }
                const auto est = error_probability(ens, n, m, 2, seeds, factors);
                if (!prev.empty())
                    for (std::size_t i = 0; i < seeds.size(); ++i)
                        if (est.per_hash[i] > prev[i] + 1e-10) ++monotone_fail;
                prev = est.per_hash;
            }
            const auto b = iid_condition_bounds(base, n, delta);
            const auto rep = check_conditions(proj.q_k(), proj.q.projector(), ens, proj.typical, b);
            if (!rep.all_satisfied()) ++cond_fail;
        }
    }
    const Ensemble orthogonal{{{0.5, DensityOperator(SubsystemLayout({{Label::B, 2}}), pure(1, 0))},
                               {0.5, DensityOperator(SubsystemLayout({{Label::B, 2}}), pure(0, 1))}}};
    for (std::size_t n : {3u, 4u}) {
        const auto ens = iid_ensemble(orthogonal, n);
        for (std::size_t m = 0; m <= n; ++m)
            orth = std::max(orth, error_probability(ens, n, m, 2, seed_range(40, 3), weighted_factors(ens)).mean);
    }
    const double t = seconds_since(t0);
    ok = worst_complete <= 1e-8 && worst_psd <= 1e-8 && orth <= 1e-10 && monotone_fail == 0 && cond_fail == 0 && t <= 120;
    return {ok, "completeness " + fmt(worst_complete) + ", negativity " + fmt(worst_psd) + ", orthogonal P_e " + fmt(orth) +
                    ", monotonicity violations " + std::to_string(monotone_fail) + ", condition failures " +
                    std::to_string(cond_fail) + ", " + fmt(t) + " s"};
}

// ---------------------------------------------------------------------------
// 6. trend in n
//
// ψ = sqrt(.5)|0>|0>|0> + sqrt(.5)|1>(c|0>|1> + s|1>|0>), s = 0.95, on
// A B R. Bob's two conditional states form the ensemble; the hash length is
// the merge's own m_z at each n.

Outcome trend() {
    const double p0 = 0.5, s = 0.95, c = std::sqrt(1 - s * s), delta = 0.25;
    const auto state = from_amps({{0, std::sqrt(p0)}, {5, std::sqrt(1 - p0) * c}, {6, std::sqrt(1 - p0) * s}});
    CMatrix r1 = CMatrix::Zero(2, 2);
    r1(0, 0) = c * c;
    r1(1, 1) = s * s;
    const SubsystemLayout b({{Label::B, 2}});
    const Ensemble base{{{p0, DensityOperator(b, pure(1, 0))}, {1 - p0, DensityOperator(b, r1)}}};
    const auto seeds = seed_range(0, 21);
    std::vector<double> pe, dist;
    for (std::size_t n = 2; n <= 5; ++n) {
        std::vector<double> d;
        std::size_t mz = 0;
        for (auto seed : seeds) {
            MergeConfig cfg;
            cfg.state = state;
            cfg.n = n;
            cfg.delta = delta;
            cfg.seed = seed;
            const auto r = run_merge(cfg);
            d.push_back(r.distance);
            mz = r.m_z;
        }
        dist.push_back(median(d));
        const auto ens = iid_ensemble(base, n);
        pe.push_back(median(error_probability(ens, n, mz, 2, seeds, weighted_factors(ens)).per_hash));
    }
    return {nonincreasing(pe) && nonincreasing(dist), "median P_e " + list(pe) + ", median distance " + list(dist) +
                                                          " over n=2..5, 21 seeds"};
}

// ---------------------------------------------------------------------------
// 7. determinism

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string &args) {
    const std::string cmd = std::string(MERGESIM_CLI) + " " + args + " > /dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Outcome determinism() {
    std::size_t compared = 0, differing = 0;
    const fs::path root = fs::temp_directory_path() / "mergesim_acceptance";
    for (const auto &entry : fs::directory_iterator(MERGESIM_SPECS)) {
        if (entry.path().extension() != ".json") continue;
        const std::string stem = entry.path().stem().string();
        std::string csv[2];
        bool ran = true;
        for (int i = 0; i < 2; ++i) {
            const fs::path out = root / (stem + std::to_string(i));
            fs::remove_all(out);
            fs::create_directories(out);
            if (run_cli("run " + entry.path().string() + " --out " + out.string()) != 0) ran = false;
            csv[i] = slurp(out / (stem + ".csv"));
        }
        if (!ran) continue;  // specs that exit with an error write no rows
        ++compared;
        if (csv[0].empty() || csv[0] != csv[1]) ++differing;
    }
    fs::remove_all(root);
    return {compared > 0 && differing == 0,
            std::to_string(compared) + " specs run twice, " + std::to_string(differing) + " differing CSVs"};
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only, known;
    app.add_option("--only", only, "run only these criteria");
    app.add_option("--known-failure", known, "criteria whose failure does not change the exit status");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"entropy identities", entropy_identities},
        {"exact protocol cases", exact_cases},
        {"covariance and inversion", covariance},
        {"pruning", pruning},
        {"HSW suite", hsw_suite},
        {"trend in n", trend},
        {"determinism", determinism},
    };
    const std::set<int> only_set(only.begin(), only.end()), known_set(known.begin(), known.end());
    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only_set.empty() && !only_set.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail;
        if (!o.pass && known_set.count(id)) std::cout << " (known failure)";
        std::cout << std::endl;
        if (!o.pass && !known_set.count(id)) ++unexpected;
    }
    return unexpected == 0 ? 0 : 1;
}
