#include "dsa/datagen.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dsa/linalg.hpp"
#include "dsa/rng.hpp"
#include "json.hpp"

namespace dsa::datagen {

using grid::GridModel;
using grid::PowerFlowSolution;
using nlohmann::json;

FeatureLayout FeatureLayout::of(const GridModel& g) {
    FeatureLayout fl;
    fl.generators = g.generators.size();
    fl.loads = g.loads.size();
    fl.lines = g.lines.size();
    fl.buses = g.buses.size();
    return fl;
}

std::vector<double> extract_features(const GridModel& g, const PowerFlowSolution& sol) {
    const std::size_t n = g.buses.size();
    std::vector<double> load_p(n, 0.0), load_q(n, 0.0);
    for (const auto& l : g.loads) {
        const auto b = std::size_t(g.bus_index(l.bus));
        load_p[b] += l.p;
        load_q[b] += l.q;
    }
    std::vector<double> bus_pset(n, 0.0);
    std::vector<int> bus_gens(n, 0);
    for (const auto& gen : g.generators) {
        const auto b = std::size_t(g.bus_index(gen.bus));
        bus_pset[b] += gen.p_set;
        bus_gens[b] += 1;
    }

    std::vector<double> f;
    f.reserve(FeatureLayout::of(g).m());
    // produced power per generator, solved at the bus and shared by p_set
    for (const auto& gen : g.generators) {
        const auto b = std::size_t(g.bus_index(gen.bus));
        double share = 1.0 / double(bus_gens[b]);
        if (bus_pset[b] > 0.0) share = gen.p_set / bus_pset[b];
        f.push_back((sol.p_inj[b] + load_p[b]) * share);
    }
    for (const auto& gen : g.generators) {
        const auto b = std::size_t(g.bus_index(gen.bus));
        double share = 1.0 / double(bus_gens[b]);
        if (bus_pset[b] > 0.0) share = gen.p_set / bus_pset[b];
        f.push_back((sol.q_inj[b] + load_q[b]) * share);
    }
    for (const auto& l : g.loads) f.push_back(l.p);
    for (const auto& l : g.loads) f.push_back(l.q);
    for (std::size_t li = 0; li < g.lines.size(); ++li) f.push_back(sol.s_from[li].real());
    for (std::size_t li = 0; li < g.lines.size(); ++li) f.push_back(sol.s_from[li].imag());
    for (std::size_t b = 0; b < n; ++b) f.push_back(sol.v_mag[b]);
    for (std::size_t b = 0; b < n; ++b) f.push_back(sol.v_ang[b]);
    return f;
}

std::vector<std::string> Database::topology_ids() const {
    std::vector<std::string> ids;
    for (const auto& t : topologies) ids.push_back(t.id);
    return ids;
}

namespace {

void adjust_power_factor(double& p, double& q, double pf_min) {
    if (p <= 0.0) {
        q = 0.0;
        return;
    }
    const double q_cap = p * std::tan(std::acos(pf_min));
    if (std::abs(q) > q_cap) q = (q < 0.0 ? -q_cap : q_cap);
}

void redispatch(GridModel& g, double load_scale) {
    for (auto& gen : g.generators) {
        gen.p_set = std::clamp(gen.p_set * load_scale, 0.0, gen.p_max);
    }
}

double total_load_p(const GridModel& g) {
    double s = 0.0;
    for (const auto& l : g.loads) s += l.p;
    return s;
}

// Lower Cholesky factor of the load covariance (sigma fraction of nominal,
// optional correlation between loads on adjacent buses).
Eigen::MatrixXd load_cholesky(const GridModel& g, const SamplingConfig& cfg) {
    const auto nl = long(g.loads.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(nl, nl);
    for (long i = 0; i < nl; ++i) {
        const double si = cfg.sigma * g.loads[std::size_t(i)].p;
        cov(i, i) = si * si;
    }
    if (cfg.correlation != 0.0) {
        auto adjacent = [&](int bus_a, int bus_b) {
            if (bus_a == bus_b) return true;
            for (const auto& ln : g.lines) {
                if (!ln.in_service) continue;
                if ((ln.from == bus_a && ln.to == bus_b) || (ln.from == bus_b && ln.to == bus_a))
                    return true;
            }
            return false;
        };
        for (long i = 0; i < nl; ++i)
            for (long j = i + 1; j < nl; ++j) {
                if (!adjacent(g.loads[std::size_t(i)].bus, g.loads[std::size_t(j)].bus)) continue;
                const double si = cfg.sigma * g.loads[std::size_t(i)].p;
                const double sj = cfg.sigma * g.loads[std::size_t(j)].p;
                cov(i, j) = cov(j, i) = cfg.correlation * si * sj;
            }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    // degenerate (e.g. zero-sigma) covariance: fall back to the diagonal
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(nl, nl);
    for (long i = 0; i < nl; ++i) l(i, i) = std::sqrt(std::max(0.0, cov(i, i)));
    return l;
}

GridModel draw_variant(const GridModel& base, const Eigen::MatrixXd& chol, Rng& rng,
                       const SamplingConfig& cfg) {
    GridModel v = base;
    const auto nl = long(base.loads.size());
    Eigen::VectorXd z(nl);
    for (long i = 0; i < nl; ++i) z[i] = rng.normal();
    const Eigen::VectorXd delta = chol * z;
    const double nominal_total = total_load_p(base);
    for (long i = 0; i < nl; ++i) {
        auto& load = v.loads[std::size_t(i)];
        const double nom_p = base.loads[std::size_t(i)].p;
        const double nom_q = base.loads[std::size_t(i)].q;
        double p = nom_p + delta[i];
        p = std::clamp(p, (1.0 - cfg.clamp) * nom_p, (1.0 + cfg.clamp) * nom_p);
        double q = nom_p > 0.0 ? nom_q * (p / nom_p) : 0.0;
        adjust_power_factor(p, q, cfg.pf_min);
        load.p = p;
        load.q = q;
    }
    const double scale = nominal_total > 0.0 ? total_load_p(v) / nominal_total : 1.0;
    redispatch(v, scale);
    return v;
}

struct GenShare {
    double p = 0.0;
    double q = 0.0;
};

std::vector<GenShare> generator_outputs(const GridModel& g, const PowerFlowSolution& sol) {
    const std::size_t n = g.buses.size();
    std::vector<double> load_p(n, 0.0), load_q(n, 0.0);
    for (const auto& l : g.loads) {
        const auto b = std::size_t(g.bus_index(l.bus));
        load_p[b] += l.p;
        load_q[b] += l.q;
    }
    std::vector<double> bus_pset(n, 0.0);
    std::vector<int> bus_gens(n, 0);
    for (const auto& gen : g.generators) {
        const auto b = std::size_t(g.bus_index(gen.bus));
        bus_pset[b] += gen.p_set;
        bus_gens[b] += 1;
    }
    std::vector<GenShare> out;
    for (const auto& gen : g.generators) {
        const auto b = std::size_t(g.bus_index(gen.bus));
        double share = 1.0 / double(bus_gens[b]);
        if (bus_pset[b] > 0.0) share = gen.p_set / bus_pset[b];
        out.push_back({(sol.p_inj[b] + load_p[b]) * share, (sol.q_inj[b] + load_q[b]) * share});
    }
    return out;
}

bool within_generation_limits(const GridModel& g, const PowerFlowSolution& sol) {
    const auto outputs = generator_outputs(g, sol);
    for (std::size_t i = 0; i < g.generators.size(); ++i) {
        const auto& gen = g.generators[i];
        if (outputs[i].p < -1e-6 || outputs[i].p > gen.p_max + 1e-6) return false;
        if (outputs[i].q < gen.q_min - 1e-6 || outputs[i].q > gen.q_max + 1e-6) return false;
    }
    return true;
}

} // namespace

std::vector<std::pair<GridModel, PowerFlowSolution>>
sample_operating_conditions(const GridModel& g, std::size_t count, std::uint64_t seed,
                            const SamplingConfig& cfg) {
    g.validate();
    Rng rng(seed);
    const Eigen::MatrixXd chol = load_cholesky(g, cfg);
    std::vector<std::pair<GridModel, PowerFlowSolution>> out;
    out.reserve(count);
    std::size_t attempts = 0;
    const std::size_t budget = 50 * std::max<std::size_t>(count, 1);
    while (out.size() < count) {
        if (attempts++ >= budget)
            throw GenerationExhausted("could not draw " + std::to_string(count) +
                                      " feasible operating conditions in " +
                                      std::to_string(budget) + " attempts");
        GridModel variant = draw_variant(g, chol, rng, cfg);
        const auto sol = grid::solve_power_flow(variant);
        if (!sol.converged) continue;
        out.emplace_back(std::move(variant), sol);
    }
    return out;
}

BisectionResult bisect_scaling(const std::function<std::optional<int>(double)>& probe, double lo,
                               double hi, double tol) {
    BisectionResult res;
    auto eval = [&](double s) -> std::optional<int> {
        const auto label = probe(s);
        if (label.has_value()) res.probes.emplace_back(s, *label);
        return label;
    };
    const auto lo_label = eval(lo);
    if (!lo_label.has_value()) return res; // cannot anchor the feasible side
    const auto hi_label = eval(hi);
    int lo_l = *lo_label;
    // power-flow failure counts as the insecure side but is never emitted
    const int hi_l = hi_label.has_value() ? *hi_label : 0;
    if (lo_l == hi_l) return res;
    if (lo_l == 0) std::swap(lo, hi); // keep the secure end in lo
    while (std::abs(hi - lo) > tol) {
        const double mid = 0.5 * (lo + hi);
        const auto mid_label = eval(mid);
        const int ml = mid_label.has_value() ? *mid_label : 0;
        if (ml == 1) lo = mid;
        else hi = mid;
    }
    res.secure_end = lo;
    res.insecure_end = hi;
    res.bracketed = true;
    return res;
}

GridModel apply_topology_change(const GridModel& g, const std::vector<int>& removed_lines,
                                const std::string& new_id) {
    GridModel out = g;
    for (int li : removed_lines) {
        if (li < 0 || std::size_t(li) >= out.lines.size())
            throw grid::ModelRejected("topology change references a missing line");
        out.lines[std::size_t(li)].in_service = false;
    }
    if (!out.connected_in_service())
        throw grid::ModelRejected("topology change disconnects the grid");
    if (!new_id.empty()) {
        out.topology_id = new_id;
    } else {
        std::string id = g.topology_id + "/rm";
        for (int li : removed_lines) id += "-" + std::to_string(li);
        out.topology_id = id;
    }
    return out;
}

GridModel scale_loads(const GridModel& base, const std::vector<double>& load_p_pattern,
                      double scale, const SamplingConfig& cfg) {
    GridModel v = base;
    const double nominal_total = total_load_p(base);
    for (std::size_t i = 0; i < v.loads.size(); ++i) {
        const double nom_p = base.loads[i].p;
        const double nom_q = base.loads[i].q;
        double p = scale * load_p_pattern[i];
        p = std::clamp(p, (1.0 - cfg.clamp) * nom_p, (1.0 + cfg.clamp) * nom_p);
        double q = nom_p > 0.0 ? nom_q * (p / nom_p) : 0.0;
        adjust_power_factor(p, q, cfg.pf_min);
        v.loads[i].p = p;
        v.loads[i].q = q;
    }
    const double total_scale = nominal_total > 0.0 ? total_load_p(v) / nominal_total : 1.0;
    redispatch(v, total_scale);
    return v;
}

namespace {

struct OcDraw {
    GridModel variant;
    PowerFlowSolution sol;
    bool labeled = true;
    std::string split = "train";
};

// split and unlabeled status assigned per operating condition so correlated
// rows never straddle the train/test divide
std::vector<OcDraw> draw_topology_ocs(const GridModel& topo, std::size_t count,
                                      std::uint64_t seed, const GenConfig& cfg, bool test_only,
                                      bool allow_unlabeled) {
    auto ocs = sample_operating_conditions(topo, count, Rng::derive(seed, 1), cfg.sampling);
    Rng assign(Rng::derive(seed, 2));
    std::vector<OcDraw> out;
    out.reserve(count);
    for (auto& [variant, sol] : ocs) {
        OcDraw d;
        d.variant = std::move(variant);
        d.sol = std::move(sol);
        const bool unl = allow_unlabeled && assign.uniform() < cfg.sampling.unlabeled_fraction;
        const bool test = assign.uniform() < cfg.sampling.test_fraction;
        d.labeled = !unl;
        d.split = test_only ? "test" : (unl ? "train" : (test ? "test" : "train"));
        if (unl) d.labeled = false;
        out.push_back(std::move(d));
    }
    return out;
}

} // namespace

Database generate_tds_database(const std::vector<GridModel>& topologies,
                               const std::vector<dynsim::ContingencySpec>& contingencies,
                               std::size_t ocs_per_topology, std::uint64_t seed,
                               const GenConfig& cfg) {
    if (contingencies.empty()) throw std::invalid_argument("contingency vocabulary is empty");
    Database db;
    db.seed = seed;
    db.generator = "tds";
    db.layout = FeatureLayout::of(topologies.front());
    for (const auto& c : contingencies) db.contingency_vocab.push_back(c.id);
    const std::size_t C = contingencies.size();

    db.test_only_topologies = cfg.test_only_topologies;

    for (std::size_t ti = 0; ti < topologies.size(); ++ti) {
        const GridModel& topo = topologies[ti];
        if (!(FeatureLayout::of(topo) == db.layout))
            throw std::invalid_argument("topology feature layout mismatch");
        const bool test_only =
            std::find(cfg.test_only_topologies.begin(), cfg.test_only_topologies.end(),
                      topo.topology_id) != cfg.test_only_topologies.end();
        const auto draws = draw_topology_ocs(topo, ocs_per_topology,
                                             Rng::derive(seed, 100 + ti), cfg, test_only,
                                             !test_only);

        struct Task {
            std::size_t oc;
            std::size_t cont;
        };
        std::vector<Task> tasks;
        for (std::size_t oi = 0; oi < draws.size(); ++oi) {
            if (!draws[oi].labeled) continue;
            for (std::size_t ci = 0; ci < C; ++ci) tasks.push_back({oi, ci});
        }
        std::vector<int> labels(tasks.size(), 0);
        const long ntasks = long(tasks.size());
#pragma omp parallel for schedule(dynamic) if (dsa::linalg::parallel_enabled())
        for (long t = 0; t < ntasks; ++t) {
            const auto& task = tasks[std::size_t(t)];
            const auto lab = dynsim::label(draws[task.oc].variant, draws[task.oc].sol,
                                           contingencies[task.cont], cfg.static_cfg, cfg.sim);
            labels[std::size_t(t)] = lab.secure ? 1 : 0;
        }

        std::size_t task_cursor = 0;
        for (std::size_t oi = 0; oi < draws.size(); ++oi) {
            const auto features = extract_features(draws[oi].variant, draws[oi].sol);
            for (std::size_t ci = 0; ci < C; ++ci) {
                LabeledSample s;
                s.oc.features = features;
                s.oc.topology_id = topo.topology_id;
                s.contingency_index = contingencies[ci].contingency_index;
                s.labeled = draws[oi].labeled;
                s.label = s.labeled ? labels[task_cursor] : 0;
                s.split = draws[oi].split;
                if (s.labeled) ++task_cursor;
                db.samples.push_back(std::move(s));
            }
        }
        db.topologies.push_back({topo.topology_id, {}});
    }
    return db;
}

Database generate_tds_database(const GridModel& g,
                               const std::vector<dynsim::ContingencySpec>& contingencies,
                               std::size_t ocs, std::uint64_t seed, const GenConfig& cfg) {
    return generate_tds_database(std::vector<GridModel>{g}, contingencies, ocs, seed, cfg);
}

Database generate_boundary_database(const std::vector<GridModel>& topologies,
                                    const std::vector<dynsim::ContingencySpec>& contingencies,
                                    std::size_t samples_per_topology, std::uint64_t seed,
                                    const GenConfig& cfg) {
    if (contingencies.empty()) throw std::invalid_argument("contingency vocabulary is empty");
    Database db;
    db.seed = seed;
    db.generator = "boundary";
    db.layout = FeatureLayout::of(topologies.front());
    for (const auto& c : contingencies) db.contingency_vocab.push_back(c.id);
    db.test_only_topologies = cfg.test_only_topologies;
    const std::size_t C = contingencies.size();

    bool any_secure = false, any_insecure = false;

    for (std::size_t ti = 0; ti < topologies.size(); ++ti) {
        const GridModel& topo = topologies[ti];
        struct DirectionOut {
            std::vector<LabeledSample> samples;
            bool saw_secure = false;
            bool saw_insecure = false;
        };
        std::vector<LabeledSample> emitted;
        const std::size_t wave = 16;
        std::size_t dir_base = 0;
        const std::size_t max_directions = 40 * std::max<std::size_t>(samples_per_topology, 1);
        while (emitted.size() < samples_per_topology && dir_base < max_directions) {
            std::vector<DirectionOut> outs(wave);
            const long w = long(wave);
#pragma omp parallel for schedule(dynamic) if (dsa::linalg::parallel_enabled())
            for (long d = 0; d < w; ++d) {
                const std::size_t dir = dir_base + std::size_t(d);
                Rng rng(Rng::derive(seed, 7000 + ti * 100000 + dir));
                const Eigen::MatrixXd chol = load_cholesky(topo, cfg.sampling);
                GridModel pattern_variant = draw_variant(topo, chol, rng, cfg.sampling);
                std::vector<double> pattern;
                for (const auto& l : pattern_variant.loads) pattern.push_back(l.p);
                const auto& cont = contingencies[dir % C];
                auto& out = outs[std::size_t(d)];

                std::map<double, std::optional<int>> memo;
                auto probe = [&](double s) -> std::optional<int> {
                    if (auto it = memo.find(s); it != memo.end()) return it->second;
                    std::optional<int> result;
                    GridModel v = scale_loads(topo, pattern, s, cfg.sampling);
                    const auto sol = grid::solve_power_flow(v);
                    // infeasibility screen: never simulated, never emitted
                    if (sol.converged && within_generation_limits(v, sol)) {
                        const auto lab = dynsim::label(v, sol, cont, cfg.static_cfg, cfg.sim);
                        LabeledSample smp;
                        smp.oc.features = extract_features(v, sol);
                        smp.oc.topology_id = topo.topology_id;
                        smp.contingency_index = cont.contingency_index;
                        smp.label = lab.secure ? 1 : 0;
                        smp.labeled = true;
                        out.samples.push_back(std::move(smp));
                        if (lab.secure) out.saw_secure = true;
                        else out.saw_insecure = true;
                        result = lab.secure ? 1 : 0;
                    }
                    memo[s] = result;
                    return result;
                };

                auto res = bisect_scaling(probe, 1.0, 1.0 + cfg.sampling.clamp, cfg.bisection_tol);
                if (!res.bracketed) // no crossing on the heavy side; try the light side
                    res = bisect_scaling(probe, 1.0 - cfg.sampling.clamp, 1.0, cfg.bisection_tol);
            }
            for (auto& out : outs) {
                any_secure = any_secure || out.saw_secure;
                any_insecure = any_insecure || out.saw_insecure;
                for (auto& s : out.samples) emitted.push_back(std::move(s));
            }
            dir_base += wave;
        }

        if (!any_insecure || !any_secure) {
            // nothing to bracket inside the scaling box
            Database fb = generate_tds_database(topologies, contingencies,
                                                std::max<std::size_t>(samples_per_topology / C, 1),
                                                seed, cfg);
            fb.generator = "boundary";
            fb.boundary_fallback = true;
            return fb;
        }

        if (emitted.size() > samples_per_topology) emitted.resize(samples_per_topology);
        const bool test_only =
            std::find(cfg.test_only_topologies.begin(), cfg.test_only_topologies.end(),
                      topo.topology_id) != cfg.test_only_topologies.end();
        // splits assigned per probe; correlated rays are desk-scale noise here
        Rng assign(Rng::derive(seed, 9000 + ti));
        for (auto& s : emitted) {
            s.split = (test_only || assign.uniform() < cfg.sampling.test_fraction) ? "test"
                                                                                   : "train";
            db.samples.push_back(std::move(s));
        }
        db.topologies.push_back({topo.topology_id, {}});
    }
    return db;
}

Database generate_boundary_database(const GridModel& g,
                                    const std::vector<dynsim::ContingencySpec>& contingencies,
                                    std::size_t samples, std::uint64_t seed, const GenConfig& cfg) {
    return generate_boundary_database(std::vector<GridModel>{g}, contingencies, samples, seed, cfg);
}

namespace {

json sample_to_json(const LabeledSample& s) {
    json j;
    j["topology_id"] = s.oc.topology_id;
    j["contingency_index"] = s.contingency_index;
    j["features"] = s.oc.features;
    if (s.labeled) j["label"] = s.label;
    else j["label"] = nullptr;
    j["split"] = s.split;
    return j;
}

} // namespace

void write_database(const Database& db, const std::string& jsonl_path, const std::string& meta_path) {
    for (const auto& s : db.samples) {
        if (s.oc.features.size() != db.layout.m())
            throw std::invalid_argument("database writer: mixed feature dimensions");
        for (double v : s.oc.features)
            if (!std::isfinite(v)) throw std::invalid_argument("database writer: non-finite feature");
    }
    std::ofstream out(jsonl_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + jsonl_path);
    for (const auto& s : db.samples) out << sample_to_json(s).dump() << "\n";

    json meta;
    meta["contingency_vocab"] = db.contingency_vocab;
    meta["m"] = db.layout.m();
    meta["layout"] = {{"generators", db.layout.generators},
                      {"loads", db.layout.loads},
                      {"lines", db.layout.lines},
                      {"buses", db.layout.buses}};
    meta["generator"] = db.generator;
    meta["boundary_fallback"] = db.boundary_fallback;
    meta["seed"] = std::to_string(db.seed);
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx", (unsigned long long)db.config_hash);
    meta["config_hash"] = hash_hex;
    json topo = json::array();
    for (const auto& t : db.topologies)
        topo.push_back({{"id", t.id}, {"removed_lines", t.removed_lines}});
    meta["topologies"] = topo;
    meta["test_only_topologies"] = db.test_only_topologies;
    json per_topo;
    for (const auto& t : db.topologies) {
        std::size_t total = 0, labeled = 0, secure = 0, train = 0;
        for (const auto& s : db.samples) {
            if (s.oc.topology_id != t.id) continue;
            ++total;
            if (s.labeled) {
                ++labeled;
                if (s.label == 1) ++secure;
            }
            if (s.split == "train") ++train;
        }
        per_topo[t.id] = {{"samples", total},
                          {"labeled", labeled},
                          {"secure", secure},
                          {"insecure", labeled - secure},
                          {"train", train},
                          {"test", total - train}};
    }
    meta["per_topology"] = per_topo;
    std::ofstream mo(meta_path);
    if (!mo) throw std::runtime_error("cannot open for writing: " + meta_path);
    mo << meta.dump(2) << "\n";
}

Database read_database(const std::string& jsonl_path, const std::string& meta_path) {
    Database db;
    {
        std::ifstream mi(meta_path);
        if (!mi) throw std::runtime_error("cannot open: " + meta_path);
        json meta = json::parse(mi);
        db.contingency_vocab = meta.at("contingency_vocab").get<std::vector<std::string>>();
        db.layout.generators = meta.at("layout").at("generators").get<std::size_t>();
        db.layout.loads = meta.at("layout").at("loads").get<std::size_t>();
        db.layout.lines = meta.at("layout").at("lines").get<std::size_t>();
        db.layout.buses = meta.at("layout").at("buses").get<std::size_t>();
        db.generator = meta.at("generator").get<std::string>();
        db.boundary_fallback = meta.value("boundary_fallback", false);
        db.seed = std::stoull(meta.at("seed").get<std::string>());
        db.config_hash = std::stoull(meta.at("config_hash").get<std::string>(), nullptr, 16);
        for (const auto& jt : meta.at("topologies"))
            db.topologies.push_back(
                {jt.at("id").get<std::string>(), jt.at("removed_lines").get<std::vector<int>>()});
        db.test_only_topologies =
            meta.value("test_only_topologies", std::vector<std::string>{});
    }
    std::ifstream in(jsonl_path);
    if (!in) throw std::runtime_error("cannot open: " + jsonl_path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        LabeledSample s;
        s.oc.topology_id = j.at("topology_id").get<std::string>();
        s.oc.features = j.at("features").get<std::vector<double>>();
        s.contingency_index = j.at("contingency_index").get<int>();
        if (j.at("label").is_null()) {
            s.labeled = false;
        } else {
            s.labeled = true;
            s.label = j.at("label").get<int>();
        }
        s.split = j.value("split", "train");
        db.samples.push_back(std::move(s));
    }
    return db;
}

void write_database_csv(const Database& db, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + csv_path);
    out << "topology_id,contingency_index,label,split";
    for (std::size_t i = 0; i < db.layout.m(); ++i) out << ",f" << i;
    out << "\n";
    char buf[32];
    for (const auto& s : db.samples) {
        out << s.oc.topology_id << "," << s.contingency_index << ","
            << (s.labeled ? std::to_string(s.label) : std::string("")) << "," << s.split;
        for (double v : s.oc.features) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

} // namespace dsa::datagen
