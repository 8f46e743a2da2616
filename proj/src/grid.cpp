#include "dsa/grid.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace dsa::grid {

using nlohmann::json;

int GridModel::bus_index(int bus_id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == bus_id) return int(i);
    return -1;
}

int GridModel::slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].kind == BusKind::Slack) return int(i);
    return -1;
}

bool GridModel::connected_in_service() const {
    const std::size_t n = buses.size();
    if (n == 0) return false;
    std::vector<std::vector<int>> adj(n);
    for (const auto& ln : lines) {
        if (!ln.in_service) continue;
        int f = bus_index(ln.from), t = bus_index(ln.to);
        if (f < 0 || t < 0) continue;
        adj[std::size_t(f)].push_back(t);
        adj[std::size_t(t)].push_back(f);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[std::size_t(u)])
            if (!seen[std::size_t(v)]) {
                seen[std::size_t(v)] = 1;
                ++count;
                stack.push_back(v);
            }
    }
    return count == n;
}

void GridModel::validate() const {
    if (buses.empty()) throw ModelRejected("grid has no buses");
    if (base_mva <= 0.0) throw ModelRejected("base_mva must be positive");
    int slacks = 0;
    for (const auto& b : buses) {
        if (b.kind == BusKind::Slack) ++slacks;
        if (!(b.v_mag > 0.0)) throw ModelRejected("bus voltage magnitude must be positive");
    }
    if (slacks != 1) throw ModelRejected("grid must have exactly one slack bus");
    std::vector<int> ids;
    for (const auto& b : buses) ids.push_back(b.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ModelRejected("duplicate bus id");
    for (const auto& ln : lines) {
        if (bus_index(ln.from) < 0 || bus_index(ln.to) < 0)
            throw ModelRejected("line endpoint references a missing bus");
        if (ln.x == 0.0) throw ModelRejected("line reactance must be nonzero");
        if (ln.r < 0.0) throw ModelRejected("line resistance must be nonnegative");
        if (!(ln.rating_mva > 0.0)) throw ModelRejected("line rating must be positive");
    }
    for (const auto& g : generators) {
        if (bus_index(g.bus) < 0) throw ModelRejected("generator references a missing bus");
        if (!(g.inertia_h > 0.0)) throw ModelRejected("generator inertia must be positive");
        if (g.p_set < 0.0 || g.p_set > g.p_max)
            throw ModelRejected("generator p_set outside [0, p_max]");
    }
    for (const auto& l : loads)
        if (bus_index(l.bus) < 0) throw ModelRejected("load references a missing bus");
    if (!connected_in_service())
        throw ModelRejected("in-service network is not connected");
}

namespace {

BusKind kind_from_string(const std::string& s) {
    if (s == "slack") return BusKind::Slack;
    if (s == "PV") return BusKind::PV;
    if (s == "PQ") return BusKind::PQ;
    throw ModelRejected("unknown bus kind: " + s);
}

std::string kind_to_string(BusKind k) {
    switch (k) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "PV";
        default: return "PQ";
    }
}

} // namespace

GridModel parse_grid(const std::string& json_text) {
    json j = json::parse(json_text);
    GridModel g;
    g.base_mva = j.value("base_mva", 100.0);
    g.topology_id = j.value("topology_id", std::string("base"));
    for (const auto& jb : j.at("buses")) {
        Bus b;
        b.id = jb.at("id").get<int>();
        b.kind = kind_from_string(jb.at("kind").get<std::string>());
        b.v_mag = jb.value("v_mag", 1.0);
        b.v_ang = jb.value("v_ang", 0.0);
        b.shunt_g = jb.value("shunt_g", 0.0);
        b.shunt_b = jb.value("shunt_b", 0.0);
        g.buses.push_back(b);
    }
    for (const auto& jl : j.at("lines")) {
        Line ln;
        ln.from = jl.at("from").get<int>();
        ln.to = jl.at("to").get<int>();
        ln.r = jl.value("r", 0.0);
        ln.x = jl.at("x").get<double>();
        ln.b_charging = jl.value("b_charging", 0.0);
        ln.rating_mva = jl.at("rating_mva").get<double>();
        ln.in_service = jl.value("in_service", true);
        g.lines.push_back(ln);
    }
    for (const auto& jg : j.at("generators")) {
        Generator gen;
        gen.bus = jg.at("bus").get<int>();
        gen.p_set = jg.value("p_set", 0.0);
        gen.q_set = jg.value("q_set", 0.0);
        gen.inertia_h = jg.at("inertia_h").get<double>();
        gen.damping_d = jg.value("damping_d", 0.0);
        gen.xd_prime = jg.at("xd_prime").get<double>();
        gen.p_max = jg.value("p_max", gen.p_set > 0 ? gen.p_set * 2 : 1.0);
        gen.q_min = jg.value("q_min", -9.99);
        gen.q_max = jg.value("q_max", 9.99);
        g.generators.push_back(gen);
    }
    for (const auto& jl : j.at("loads")) {
        Load l;
        l.bus = jl.at("bus").get<int>();
        l.p = jl.value("p", 0.0);
        l.q = jl.value("q", 0.0);
        g.loads.push_back(l);
    }
    g.validate();
    return g;
}

GridModel load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open grid file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_grid(ss.str());
}

std::string grid_to_json(const GridModel& g) {
    json j;
    j["base_mva"] = g.base_mva;
    j["topology_id"] = g.topology_id;
    j["buses"] = json::array();
    for (const auto& b : g.buses)
        j["buses"].push_back({{"id", b.id},
                              {"kind", kind_to_string(b.kind)},
                              {"v_mag", b.v_mag},
                              {"v_ang", b.v_ang},
                              {"shunt_g", b.shunt_g},
                              {"shunt_b", b.shunt_b}});
    j["lines"] = json::array();
    for (const auto& ln : g.lines)
        j["lines"].push_back({{"from", ln.from},
                              {"to", ln.to},
                              {"r", ln.r},
                              {"x", ln.x},
                              {"b_charging", ln.b_charging},
                              {"rating_mva", ln.rating_mva},
                              {"in_service", ln.in_service}});
    j["generators"] = json::array();
    for (const auto& gen : g.generators)
        j["generators"].push_back({{"bus", gen.bus},
                                   {"p_set", gen.p_set},
                                   {"q_set", gen.q_set},
                                   {"inertia_h", gen.inertia_h},
                                   {"damping_d", gen.damping_d},
                                   {"xd_prime", gen.xd_prime},
                                   {"p_max", gen.p_max},
                                   {"q_min", gen.q_min},
                                   {"q_max", gen.q_max}});
    j["loads"] = json::array();
    for (const auto& l : g.loads)
        j["loads"].push_back({{"bus", l.bus}, {"p", l.p}, {"q", l.q}});
    return j.dump(2);
}

std::vector<Complex> build_admittance(const GridModel& g) {
    const std::size_t n = g.buses.size();
    if (n == 0) throw ModelRejected("cannot assemble admittance of an empty grid");
    std::vector<Complex> Y(n * n, Complex(0.0, 0.0));
    for (const auto& ln : g.lines) {
        if (!ln.in_service) continue;
        const int f = g.bus_index(ln.from);
        const int t = g.bus_index(ln.to);
        if (f < 0 || t < 0) throw ModelRejected("line endpoint references a missing bus");
        const Complex z(ln.r, ln.x);
        const Complex y = 1.0 / z;
        const Complex ysh(0.0, ln.b_charging / 2.0);
        Y[std::size_t(f) * n + std::size_t(f)] += y + ysh;
        Y[std::size_t(t) * n + std::size_t(t)] += y + ysh;
        Y[std::size_t(f) * n + std::size_t(t)] -= y;
        Y[std::size_t(t) * n + std::size_t(f)] -= y;
    }
    for (std::size_t i = 0; i < n; ++i)
        Y[i * n + i] += Complex(g.buses[i].shunt_g, g.buses[i].shunt_b);
    return Y;
}

namespace {

struct Injections {
    std::vector<double> p; // specified net P per bus (gen - load)
    std::vector<double> q; // specified net Q per bus
};

Injections specified_injections(const GridModel& g) {
    Injections inj;
    inj.p.assign(g.buses.size(), 0.0);
    inj.q.assign(g.buses.size(), 0.0);
    for (const auto& gen : g.generators) {
        const int b = g.bus_index(gen.bus);
        inj.p[std::size_t(b)] += gen.p_set;
        inj.q[std::size_t(b)] += gen.q_set;
    }
    for (const auto& l : g.loads) {
        const int b = g.bus_index(l.bus);
        inj.p[std::size_t(b)] -= l.p;
        inj.q[std::size_t(b)] -= l.q;
    }
    return inj;
}

} // namespace

PowerFlowSolution solve_power_flow(const GridModel& g, const PowerFlowOptions& opt) {
    g.validate();
    const std::size_t n = g.buses.size();
    const auto Y = build_admittance(g);
    auto G = [&](std::size_t i, std::size_t k) { return Y[i * n + k].real(); };
    auto B = [&](std::size_t i, std::size_t k) { return Y[i * n + k].imag(); };

    PowerFlowSolution sol;
    sol.v_mag.assign(n, 1.0);
    sol.v_ang.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Bus& b = g.buses[i];
        if (b.kind != BusKind::PQ) {
            sol.v_mag[i] = b.v_mag;
        }
        if (b.kind == BusKind::Slack) sol.v_ang[i] = b.v_ang;
    }
    if (opt.warm_start && opt.warm_start->v_mag.size() == n) {
        sol.v_mag = opt.warm_start->v_mag;
        sol.v_ang = opt.warm_start->v_ang;
        for (std::size_t i = 0; i < n; ++i) {
            const Bus& b = g.buses[i];
            if (b.kind != BusKind::PQ) sol.v_mag[i] = b.v_mag;
            if (b.kind == BusKind::Slack) sol.v_ang[i] = b.v_ang;
        }
    }

    const auto inj = specified_injections(g);

    // unknown ordering: angles for all non-slack buses, then magnitudes for PQ
    std::vector<std::size_t> ang_buses, mag_buses;
    for (std::size_t i = 0; i < n; ++i) {
        if (g.buses[i].kind != BusKind::Slack) ang_buses.push_back(i);
        if (g.buses[i].kind == BusKind::PQ) mag_buses.push_back(i);
    }
    const std::size_t na = ang_buses.size();
    const std::size_t nm = mag_buses.size();
    const std::size_t nu = na + nm;

    std::vector<double> p_calc(n), q_calc(n);
    auto compute_injections = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            double pi = 0.0, qi = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double th = sol.v_ang[i] - sol.v_ang[k];
                const double ct = std::cos(th), st = std::sin(th);
                pi += sol.v_mag[k] * (G(i, k) * ct + B(i, k) * st);
                qi += sol.v_mag[k] * (G(i, k) * st - B(i, k) * ct);
            }
            p_calc[i] = sol.v_mag[i] * pi;
            q_calc[i] = sol.v_mag[i] * qi;
        }
    };

    auto mismatch_norm = [&](Eigen::VectorXd& f) {
        f.resize(long(nu));
        double norm = 0.0;
        for (std::size_t a = 0; a < na; ++a) {
            const std::size_t i = ang_buses[a];
            f[long(a)] = inj.p[i] - p_calc[i];
            norm = std::max(norm, std::abs(f[long(a)]));
        }
        for (std::size_t m = 0; m < nm; ++m) {
            const std::size_t i = mag_buses[m];
            f[long(na + m)] = inj.q[i] - q_calc[i];
            norm = std::max(norm, std::abs(f[long(na + m)]));
        }
        return norm;
    };

    Eigen::VectorXd f;
    compute_injections();
    double norm = mismatch_norm(f);
    int iter = 0;
    while (norm > opt.tolerance && iter < opt.max_iter) {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(long(nu), long(nu));
        for (std::size_t a = 0; a < na; ++a) {
            const std::size_t i = ang_buses[a];
            const double vi = sol.v_mag[i];
            for (std::size_t b2 = 0; b2 < na; ++b2) {
                const std::size_t k = ang_buses[b2];
                double v;
                if (i == k) {
                    v = -q_calc[i] - B(i, i) * vi * vi;
                } else {
                    const double th = sol.v_ang[i] - sol.v_ang[k];
                    v = vi * sol.v_mag[k] * (G(i, k) * std::sin(th) - B(i, k) * std::cos(th));
                }
                J(long(a), long(b2)) = v;
            }
            for (std::size_t m = 0; m < nm; ++m) {
                const std::size_t k = mag_buses[m];
                double v;
                if (i == k) {
                    v = p_calc[i] / vi + G(i, i) * vi;
                } else {
                    const double th = sol.v_ang[i] - sol.v_ang[k];
                    v = vi * (G(i, k) * std::cos(th) + B(i, k) * std::sin(th));
                }
                J(long(a), long(na + m)) = v;
            }
        }
        for (std::size_t q = 0; q < nm; ++q) {
            const std::size_t i = mag_buses[q];
            const double vi = sol.v_mag[i];
            for (std::size_t b2 = 0; b2 < na; ++b2) {
                const std::size_t k = ang_buses[b2];
                double v;
                if (i == k) {
                    v = p_calc[i] - G(i, i) * vi * vi;
                } else {
                    const double th = sol.v_ang[i] - sol.v_ang[k];
                    v = -vi * sol.v_mag[k] * (G(i, k) * std::cos(th) + B(i, k) * std::sin(th));
                }
                J(long(na + q), long(b2)) = v;
            }
            for (std::size_t m = 0; m < nm; ++m) {
                const std::size_t k = mag_buses[m];
                double v;
                if (i == k) {
                    v = q_calc[i] / vi - B(i, i) * vi;
                } else {
                    const double th = sol.v_ang[i] - sol.v_ang[k];
                    v = vi * (G(i, k) * std::sin(th) - B(i, k) * std::cos(th));
                }
                J(long(na + q), long(na + m)) = v;
            }
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
        const Eigen::VectorXd dx = lu.solve(f);
        if (!dx.allFinite()) {
            sol.converged = false;
            sol.iterations = iter;
            sol.max_mismatch = norm;
            sol.diagnostic = "singular Jacobian";
            return sol;
        }
        for (std::size_t a = 0; a < na; ++a) sol.v_ang[ang_buses[a]] += dx[long(a)];
        for (std::size_t m = 0; m < nm; ++m) sol.v_mag[mag_buses[m]] += dx[long(na + m)];
        // a collapsing voltage means the iterate left the physical region
        for (std::size_t m = 0; m < nm; ++m) {
            if (!(sol.v_mag[mag_buses[m]] > 1e-3) || !std::isfinite(sol.v_mag[mag_buses[m]])) {
                sol.converged = false;
                sol.iterations = iter + 1;
                sol.max_mismatch = norm;
                sol.diagnostic = "voltage collapse in Newton iterate";
                return sol;
            }
        }
        compute_injections();
        norm = mismatch_norm(f);
        if (!std::isfinite(norm)) {
            sol.converged = false;
            sol.iterations = iter + 1;
            sol.max_mismatch = norm;
            sol.diagnostic = "non-finite mismatch";
            return sol;
        }
        ++iter;
    }

    sol.iterations = iter;
    sol.max_mismatch = norm;
    sol.converged = norm <= opt.tolerance;
    if (!sol.converged) {
        sol.diagnostic = "max iterations reached";
        return sol;
    }

    sol.p_inj = p_calc;
    sol.q_inj = q_calc;
    sol.s_from.assign(g.lines.size(), Complex(0, 0));
    sol.s_to.assign(g.lines.size(), Complex(0, 0));
    for (std::size_t li = 0; li < g.lines.size(); ++li) {
        const Line& ln = g.lines[li];
        if (!ln.in_service) continue;
        const std::size_t f = std::size_t(g.bus_index(ln.from));
        const std::size_t t = std::size_t(g.bus_index(ln.to));
        const Complex vf = std::polar(sol.v_mag[f], sol.v_ang[f]);
        const Complex vt = std::polar(sol.v_mag[t], sol.v_ang[t]);
        const Complex y = 1.0 / Complex(ln.r, ln.x);
        const Complex ysh(0.0, ln.b_charging / 2.0);
        const Complex if_ = y * (vf - vt) + ysh * vf;
        const Complex it_ = y * (vt - vf) + ysh * vt;
        sol.s_from[li] = vf * std::conj(if_);
        sol.s_to[li] = vt * std::conj(it_);
    }
    return sol;
}

double static_overload_index(const GridModel& g, const PowerFlowSolution& sol,
                             const std::vector<double>& weights, int exponent) {
    if (!sol.converged) throw std::invalid_argument("overload index requires a converged solution");
    double fx = 0.0;
    for (std::size_t li = 0; li < g.lines.size(); ++li) {
        const Line& ln = g.lines[li];
        if (!ln.in_service) continue;
        if (!(ln.rating_mva > 0.0)) throw ModelRejected("line rating must be positive");
        const double s_mean = 0.5 * (std::abs(sol.s_from[li]) + std::abs(sol.s_to[li]));
        const double w = li < weights.size() ? weights[li] : 1.0;
        fx += w * std::pow(s_mean / ln.rating_mva, exponent);
    }
    return fx;
}

double static_overload_index(const GridModel& g, const PowerFlowSolution& sol) {
    return static_overload_index(g, sol, {}, 2);
}

double max_loading_ratio(const GridModel& g, const PowerFlowSolution& sol) {
    double worst = 0.0;
    for (std::size_t li = 0; li < g.lines.size(); ++li) {
        const Line& ln = g.lines[li];
        if (!ln.in_service) continue;
        if (!(ln.rating_mva > 0.0)) throw ModelRejected("line rating must be positive");
        const double s_mean = 0.5 * (std::abs(sol.s_from[li]) + std::abs(sol.s_to[li]));
        worst = std::max(worst, s_mean / ln.rating_mva);
    }
    return worst;
}

} // namespace dsa::grid
