#include "dsa/dynsim.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace dsa::dynsim {

using grid::Complex;
using grid::GridModel;
using grid::PowerFlowSolution;
using nlohmann::json;

namespace {

constexpr double kOmegaSync = 2.0 * std::numbers::pi * 60.0; // rad/s
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct Machine {
    int bus = 0;          // bus array index
    double e_mag = 1.0;   // internal emf behind x'd
    double delta0 = 0.0;  // rad
    double pm = 0.0;      // mechanical power, pu
    double m = 1.0;       // 2H / omega_s
    double d = 0.0;       // D / omega_s
    Complex y;            // 1 / (j x'd)
};

struct ReducedNetwork {
    // A V = B E with A = Ybus + loads + machine branches (+ fault shunt)
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu;
    Eigen::MatrixXcd B; // n x g
    bool valid = false;
};

std::vector<Machine> init_machines(const GridModel& g, const PowerFlowSolution& sol) {
    std::vector<Machine> machines;
    const std::size_t n = g.buses.size();
    std::vector<double> load_p(n, 0.0), load_q(n, 0.0);
    for (const auto& l : g.loads) {
        const auto b = std::size_t(g.bus_index(l.bus));
        load_p[b] += l.p;
        load_q[b] += l.q;
    }
    // per-bus produced power, then shared among the bus's generators
    std::vector<double> bus_gp(n, 0.0), bus_gq(n, 0.0), bus_pset(n, 0.0);
    std::vector<int> bus_gens(n, 0);
    for (const auto& gen : g.generators) {
        const auto b = std::size_t(g.bus_index(gen.bus));
        bus_pset[b] += gen.p_set;
        bus_gens[b] += 1;
    }
    for (std::size_t b = 0; b < n; ++b) {
        if (bus_gens[b] == 0) continue;
        bus_gp[b] = sol.p_inj[b] + load_p[b];
        bus_gq[b] = sol.q_inj[b] + load_q[b];
    }
    for (const auto& gen : g.generators) {
        const auto b = std::size_t(g.bus_index(gen.bus));
        double share = 1.0 / double(bus_gens[b]);
        if (bus_pset[b] > 0.0) share = gen.p_set / bus_pset[b];
        const double pg = bus_gp[b] * share;
        const double qg = bus_gq[b] * share;
        const Complex v = std::polar(sol.v_mag[b], sol.v_ang[b]);
        const Complex s(pg, qg);
        const Complex i = std::conj(s / v);
        const Complex e = v + Complex(0.0, gen.xd_prime) * i;
        Machine mac;
        mac.bus = int(b);
        mac.e_mag = std::abs(e);
        mac.delta0 = std::arg(e);
        mac.pm = (e * std::conj(i)).real();
        mac.m = 2.0 * gen.inertia_h / kOmegaSync;
        mac.d = gen.damping_d / kOmegaSync;
        mac.y = 1.0 / Complex(0.0, gen.xd_prime);
        machines.push_back(mac);
    }
    return machines;
}

Eigen::MatrixXcd network_matrix(const GridModel& g, const PowerFlowSolution& pre,
                                const std::vector<Machine>& machines, int faulted_bus_idx,
                                double fault_admittance) {
    const std::size_t n = g.buses.size();
    const auto Yflat = grid::build_admittance(g);
    Eigen::MatrixXcd A{long(n), long(n)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) A(long(i), long(k)) = Yflat[i * n + k];
    // constant-impedance loads derived from the pre-fault operating point
    for (const auto& l : g.loads) {
        const auto b = std::size_t(g.bus_index(l.bus));
        const double v2 = pre.v_mag[b] * pre.v_mag[b];
        A(long(b), long(b)) += Complex(l.p, -l.q) / v2;
    }
    for (const auto& mac : machines) A(long(mac.bus), long(mac.bus)) += mac.y;
    if (faulted_bus_idx >= 0) A(faulted_bus_idx, faulted_bus_idx) += Complex(fault_admittance, 0.0);
    return A;
}

ReducedNetwork make_phase(const GridModel& g, const PowerFlowSolution& pre,
                          const std::vector<Machine>& machines, int faulted_bus_idx,
                          double fault_admittance) {
    ReducedNetwork net;
    const auto A = network_matrix(g, pre, machines, faulted_bus_idx, fault_admittance);
    net.lu = Eigen::PartialPivLU<Eigen::MatrixXcd>(A);
    net.B = Eigen::MatrixXcd::Zero(A.rows(), long(machines.size()));
    for (std::size_t i = 0; i < machines.size(); ++i)
        net.B(machines[i].bus, long(i)) = machines[i].y;
    net.valid = true;
    return net;
}

// electrical power of every machine plus the algebraic bus voltages
void electrical_state(const ReducedNetwork& net, const std::vector<Machine>& machines,
                      const std::vector<double>& delta, std::vector<double>& pe,
                      Eigen::VectorXcd* bus_v) {
    const auto gcount = long(machines.size());
    Eigen::VectorXcd e(gcount);
    for (long i = 0; i < gcount; ++i)
        e[i] = std::polar(machines[std::size_t(i)].e_mag, delta[std::size_t(i)]);
    const Eigen::VectorXcd rhs = net.B * e;
    const Eigen::VectorXcd v = net.lu.solve(rhs);
    pe.resize(std::size_t(gcount));
    for (long i = 0; i < gcount; ++i) {
        const auto& mac = machines[std::size_t(i)];
        const Complex cur = mac.y * (e[i] - v[mac.bus]);
        pe[std::size_t(i)] = (e[i] * std::conj(cur)).real();
    }
    if (bus_v) *bus_v = v;
}

// Reduced g x g admittance seen from the machine internal nodes:
// Yred = diag(y) - B^T A^{-1} B.
Eigen::MatrixXcd reduced_admittance(const GridModel& g, const PowerFlowSolution& pre,
                                    const std::vector<Machine>& machines) {
    const auto A = network_matrix(g, pre, machines, -1, 0.0);
    const auto gcount = long(machines.size());
    Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(A.rows(), gcount);
    for (long i = 0; i < gcount; ++i) B(machines[std::size_t(i)].bus, i) = machines[std::size_t(i)].y;
    const Eigen::MatrixXcd AinvB = Eigen::PartialPivLU<Eigen::MatrixXcd>(A).solve(B);
    Eigen::MatrixXcd yred = -B.transpose() * AinvB;
    for (long i = 0; i < gcount; ++i) yred(i, i) += machines[std::size_t(i)].y;
    return yred;
}

} // namespace

void ContingencySpec::validate(const GridModel& g) const {
    if (!(t_clear > t_fault)) throw std::invalid_argument("contingency: t_clear must exceed t_fault");
    if (tripped_line < 0 || std::size_t(tripped_line) >= g.lines.size())
        throw std::invalid_argument("contingency: tripped_line out of range");
    if (g.bus_index(faulted_bus) < 0)
        throw std::invalid_argument("contingency: faulted_bus not in grid");
    // the tripped line must be incident to the faulted bus or one hop away
    const auto& ln = g.lines[std::size_t(tripped_line)];
    bool near = ln.from == faulted_bus || ln.to == faulted_bus;
    if (!near) {
        for (const auto& other : g.lines) {
            if (other.from != faulted_bus && other.to != faulted_bus) continue;
            const int a = other.from == faulted_bus ? other.to : other.from;
            if (ln.from == a || ln.to == a) {
                near = true;
                break;
            }
        }
    }
    if (!near)
        throw std::invalid_argument("contingency: tripped_line not electrically near faulted_bus");
    GridModel post = g;
    post.lines[std::size_t(tripped_line)].in_service = false;
    if (!post.connected_in_service())
        throw std::invalid_argument("contingency: tripping the line disconnects the grid");
}

std::vector<ContingencySpec> load_contingencies(const std::string& path, const GridModel& g) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open contingency file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str());
    std::vector<ContingencySpec> out;
    for (const auto& jc : j) {
        ContingencySpec c;
        c.id = jc.at("id").get<std::string>();
        c.faulted_bus = jc.at("faulted_bus").get<int>();
        c.t_fault = jc.at("t_fault").get<double>();
        c.t_clear = jc.at("t_clear").get<double>();
        c.tripped_line = jc.at("tripped_line").get<int>();
        c.contingency_index = jc.at("contingency_index").get<int>();
        c.validate(g);
        out.push_back(c);
    }
    return out;
}

std::string contingencies_to_json(const std::vector<ContingencySpec>& list) {
    json j = json::array();
    for (const auto& c : list)
        j.push_back({{"id", c.id},
                     {"faulted_bus", c.faulted_bus},
                     {"t_fault", c.t_fault},
                     {"t_clear", c.t_clear},
                     {"tripped_line", c.tripped_line},
                     {"contingency_index", c.contingency_index}});
    return j.dump(2);
}

double transient_index(double delta_max_deg) {
    return (360.0 - delta_max_deg) / (360.0 + delta_max_deg) * 100.0;
}

SimulationResult simulate(const GridModel& g, const PowerFlowSolution& initial,
                          const ContingencySpec& c, const SimulationOptions& opt) {
    if (!initial.converged)
        throw std::invalid_argument("simulate requires a converged initial power flow");
    const auto machines = init_machines(g, initial);
    if (machines.empty()) throw std::invalid_argument("simulate requires at least one generator");
    const std::size_t gcount = machines.size();
    const std::size_t n = g.buses.size();

    const int fault_idx = g.bus_index(c.faulted_bus);
    GridModel post = g;
    if (c.tripped_line >= 0 && std::size_t(c.tripped_line) < post.lines.size())
        post.lines[std::size_t(c.tripped_line)].in_service = false;

    const ReducedNetwork pre_net = make_phase(g, initial, machines, -1, 0.0);
    const ReducedNetwork fault_net = make_phase(g, initial, machines, fault_idx, opt.fault_admittance);
    const ReducedNetwork post_net = make_phase(post, initial, machines, -1, 0.0);

    const long long nsteps = std::llround(opt.horizon / opt.step);
    const long long k_fault = std::llround(c.t_fault / opt.step);
    const long long k_clear = std::llround(c.t_clear / opt.step);

    auto phase_at = [&](long long k) -> const ReducedNetwork& {
        if (k >= k_fault && k < k_clear) return fault_net;
        if (k >= k_clear) return post_net;
        return pre_net;
    };

    SimulationResult res;
    res.time_grid.reserve(std::size_t(nsteps) + 1);
    res.rotor_angles.assign(gcount, {});
    res.rotor_speeds.assign(gcount, {});
    res.bus_voltages.assign(n, {});

    std::vector<double> delta(gcount), omega(gcount, 0.0);
    for (std::size_t i = 0; i < gcount; ++i) delta[i] = machines[i].delta0;

    std::vector<double> pe(gcount);
    Eigen::VectorXcd bus_v;

    auto record = [&](long long k) {
        res.time_grid.push_back(double(k) * opt.step);
        for (std::size_t i = 0; i < gcount; ++i) {
            res.rotor_angles[i].push_back(delta[i] * kRadToDeg);
            res.rotor_speeds[i].push_back(omega[i]);
        }
        electrical_state(phase_at(k), machines, delta, pe, &bus_v);
        for (std::size_t b = 0; b < n; ++b) res.bus_voltages[b].push_back(std::abs(bus_v[long(b)]));
        const auto [lo, hi] = std::minmax_element(delta.begin(), delta.end());
        res.delta_max = std::max(res.delta_max, (*hi - *lo) * kRadToDeg);
    };

    auto deriv = [&](const ReducedNetwork& net, const std::vector<double>& d,
                     const std::vector<double>& w, std::vector<double>& dd,
                     std::vector<double>& dw) {
        electrical_state(net, machines, d, pe, nullptr);
        dd.resize(gcount);
        dw.resize(gcount);
        for (std::size_t i = 0; i < gcount; ++i) {
            dd[i] = w[i];
            dw[i] = (machines[i].pm - pe[i] - machines[i].d * w[i]) / machines[i].m;
        }
    };

    std::vector<double> k1d(gcount), k1w(gcount), k2d(gcount), k2w(gcount), k3d(gcount),
        k3w(gcount), k4d(gcount), k4w(gcount), td(gcount), tw(gcount);

    record(0);
    for (long long k = 0; k < nsteps; ++k) {
        const ReducedNetwork& net = phase_at(k);
        const double h = opt.step;
        deriv(net, delta, omega, k1d, k1w);
        for (std::size_t i = 0; i < gcount; ++i) {
            td[i] = delta[i] + 0.5 * h * k1d[i];
            tw[i] = omega[i] + 0.5 * h * k1w[i];
        }
        deriv(net, td, tw, k2d, k2w);
        for (std::size_t i = 0; i < gcount; ++i) {
            td[i] = delta[i] + 0.5 * h * k2d[i];
            tw[i] = omega[i] + 0.5 * h * k2w[i];
        }
        deriv(net, td, tw, k3d, k3w);
        for (std::size_t i = 0; i < gcount; ++i) {
            td[i] = delta[i] + h * k3d[i];
            tw[i] = omega[i] + h * k3w[i];
        }
        deriv(net, td, tw, k4d, k4w);
        for (std::size_t i = 0; i < gcount; ++i) {
            delta[i] += h / 6.0 * (k1d[i] + 2.0 * k2d[i] + 2.0 * k3d[i] + k4d[i]);
            omega[i] += h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
        }
        bool blown = false;
        for (std::size_t i = 0; i < gcount; ++i)
            if (!std::isfinite(delta[i]) || std::abs(delta[i]) * kRadToDeg > opt.blowup_deg)
                blown = true;
        if (blown) {
            res.converged = false;
            res.delta_max = std::max(res.delta_max, opt.blowup_deg);
            break;
        }
        record(k + 1);
    }

    res.tsi = transient_index(res.delta_max);
    res.voltage_violation = !voltage_criterion(res);
    return res;
}

std::vector<Mode> small_signal_damping(const GridModel& g, const PowerFlowSolution& equilibrium) {
    if (!equilibrium.converged)
        throw std::invalid_argument("small-signal analysis requires a converged power flow");
    const auto machines = init_machines(g, equilibrium);
    const auto gc = long(machines.size());
    const Eigen::MatrixXcd yred = reduced_admittance(g, equilibrium, machines);

    // dPe_i/ddelta_j around the initialization point
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(gc, gc);
    for (long i = 0; i < gc; ++i) {
        double diag = 0.0;
        for (long j = 0; j < gc; ++j) {
            if (i == j) continue;
            const double ei = machines[std::size_t(i)].e_mag;
            const double ej = machines[std::size_t(j)].e_mag;
            const double dij = machines[std::size_t(i)].delta0 - machines[std::size_t(j)].delta0;
            const double gij = yred(i, j).real();
            const double bij = yred(i, j).imag();
            const double kij = ei * ej * (gij * std::sin(dij) - bij * std::cos(dij));
            k(i, j) = kij;
            diag -= kij;
        }
        k(i, i) = diag;
    }

    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * gc, 2 * gc);
    for (long i = 0; i < gc; ++i) {
        jac(i, gc + i) = 1.0;
        for (long j = 0; j < gc; ++j) jac(gc + i, j) = -k(i, j) / machines[std::size_t(i)].m;
        jac(gc + i, gc + i) = -machines[std::size_t(i)].d / machines[std::size_t(i)].m;
    }

    Eigen::EigenSolver<Eigen::MatrixXd> es(jac);
    std::vector<Mode> modes;
    for (long i = 0; i < es.eigenvalues().size(); ++i) {
        const double sigma = es.eigenvalues()[i].real();
        const double omega = es.eigenvalues()[i].imag();
        if (omega <= 1e-9) continue; // keep one of each conjugate pair
        Mode m;
        m.frequency_hz = omega / (2.0 * std::numbers::pi);
        m.damping_ratio = -sigma / std::sqrt(sigma * sigma + omega * omega);
        modes.push_back(m);
    }
    std::sort(modes.begin(), modes.end(),
              [](const Mode& a, const Mode& b) { return a.frequency_hz < b.frequency_hz; });
    return modes;
}

bool voltage_criterion(const SimulationResult& r) {
    if (r.time_grid.size() < 2) return true;
    const double step = r.time_grid[1] - r.time_grid[0];
    for (const auto& traj : r.bus_voltages) {
        std::size_t run = 0;
        for (double v : traj) {
            if (v < kVoltageLo || v > kVoltageHi) {
                ++run;
                // duration spanned by a run of k samples is (k-1)*step
                if (run >= 2 && double(run - 1) * step > kVoltageDwell) return false;
            } else {
                run = 0;
            }
        }
    }
    return true;
}

void write_trace_csv(const SimulationResult& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "t";
    for (std::size_t i = 0; i < r.rotor_angles.size(); ++i) out << ",delta" << i << "_deg";
    for (std::size_t b = 0; b < r.bus_voltages.size(); ++b) out << ",v" << b << "_pu";
    out << "\n";
    char buf[32];
    for (std::size_t k = 0; k < r.time_grid.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.4f", r.time_grid[k]);
        out << buf;
        for (const auto& a : r.rotor_angles) {
            std::snprintf(buf, sizeof buf, ",%.6f", a[k]);
            out << buf;
        }
        for (const auto& v : r.bus_voltages) {
            std::snprintf(buf, sizeof buf, ",%.6f", v[k]);
            out << buf;
        }
        out << "\n";
    }
}

SecurityLabel label(const GridModel& g, const PowerFlowSolution& initial, const ContingencySpec& c,
                    const StaticConfig& static_cfg, const SimulationOptions& opt) {
    SecurityLabel out;
    const SimulationResult sim = simulate(g, initial, c, opt);
    out.tsi = sim.tsi;
    if (!sim.converged) {
        out.transient_ok = false;
        out.reasons.push_back("simulation divergence");
    } else if (sim.tsi < kTsiSecureThreshold) {
        out.transient_ok = false;
        out.reasons.push_back("transient");
    }

    out.voltage_ok = !sim.voltage_violation;
    if (!out.voltage_ok) out.reasons.push_back("voltage");

    GridModel post = g;
    post.lines[std::size_t(c.tripped_line)].in_service = false;
    grid::PowerFlowOptions pf_opt;
    pf_opt.warm_start = &initial;
    grid::PowerFlowSolution post_sol;
    bool post_ok = false;
    try {
        post_sol = grid::solve_power_flow(post, pf_opt);
        post_ok = post_sol.converged;
    } catch (const grid::ModelRejected&) {
        post_ok = false;
    }

    if (!post_ok) {
        out.small_signal_ok = false;
        out.reasons.push_back("no post-fault equilibrium");
        out.static_ok = false;
        out.reasons.push_back("post-fault power flow diverged");
    } else {
        const auto modes = small_signal_damping(post, post_sol);
        for (const auto& m : modes) {
            if (m.frequency_hz < kModeBandLoHz || m.frequency_hz > kModeBandHiHz) continue;
            if (m.damping_ratio < kDampingFloor) {
                out.small_signal_ok = false;
                break;
            }
        }
        if (!out.small_signal_ok) out.reasons.push_back("small-signal");

        out.overload_index = grid::static_overload_index(post, post_sol, static_cfg.weights,
                                                         static_cfg.exponent);
        const double worst = grid::max_loading_ratio(post, post_sol);
        if (worst > static_cfg.loading_limit) out.static_ok = false;
        if (static_cfg.fx_cutoff >= 0.0 && out.overload_index > static_cfg.fx_cutoff)
            out.static_ok = false;
        if (!out.static_ok) out.reasons.push_back("static");
    }

    out.secure = out.transient_ok && out.small_signal_ok && out.voltage_ok && out.static_ok;
    return out;
}

} // namespace dsa::dynsim
