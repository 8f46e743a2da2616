#include "dsa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "dsa/rng.hpp"
#include "json.hpp"

namespace dsa::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

void Normalizer::fit(const Matrix& train_x) {
    const std::size_t n = train_x.rows;
    const std::size_t m = train_x.cols;
    if (n == 0) throw std::invalid_argument("normalizer: empty training split");
    mean.assign(m, 0.0);
    std_dev.assign(m, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) mean[c] += train_x(r, c);
    for (auto& v : mean) v /= double(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            const double d = train_x(r, c) - mean[c];
            std_dev[c] += d * d;
        }
    for (std::size_t c = 0; c < m; ++c) {
        std_dev[c] = n > 1 ? std::sqrt(std_dev[c] / double(n - 1)) : 0.0;
        if (std_dev[c] < 1e-12) {
            std_dev[c] = 1.0;
            warnings.push_back("feature " + std::to_string(c) + " has zero variance; std set to 1");
        }
    }
}

std::vector<double> Normalizer::apply(const std::vector<double>& x) const {
    if (x.size() != mean.size()) throw std::invalid_argument("normalizer: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / std_dev[i];
    return out;
}

Matrix Normalizer::apply(const Matrix& x) const {
    if (x.cols != mean.size()) throw std::invalid_argument("normalizer: dimension mismatch");
    Matrix out(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = (x(r, c) - mean[c]) / std_dev[c];
    return out;
}

std::string Normalizer::to_json() const {
    json j;
    j["format_version"] = 1;
    j["mean"] = mean;
    j["std"] = std_dev;
    return j.dump();
}

Normalizer Normalizer::from_json(const std::string& text) {
    json j = json::parse(text);
    Normalizer n;
    n.mean = j.at("mean").get<std::vector<double>>();
    n.std_dev = j.at("std").get<std::vector<double>>();
    return n;
}

namespace {

datagen::TopologyDef topo_from_json(const json& j) {
    datagen::TopologyDef t;
    t.id = j.at("id").get<std::string>();
    t.removed_lines = j.at("remove_lines").get<std::vector<int>>();
    return t;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
}

} // namespace

PipelineConfig PipelineConfig::parse(const std::string& text) {
    json j = json::parse(text);
    PipelineConfig cfg;
    cfg.grid_file = j.at("grid_file").get<std::string>();
    cfg.contingency_file = j.at("contingency_file").get<std::string>();
    cfg.output_dir = j.value("output_dir", std::string("out"));
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.mode = j.value("mode", std::string("tds"));

    for (const auto& jt : j.value("topologies", json::array()))
        cfg.derived_topologies.push_back(topo_from_json(jt));
    if (j.contains("dissimilar_topology"))
        cfg.dissimilar_topology = topo_from_json(j.at("dissimilar_topology"));

    if (j.contains("sampling")) {
        const auto& s = j.at("sampling");
        cfg.gen.sampling.sigma = s.value("sigma", 0.15);
        cfg.gen.sampling.correlation = s.value("correlation", 0.0);
        cfg.gen.sampling.clamp = s.value("clamp", 0.5);
        cfg.gen.sampling.pf_min = s.value("pf_min", 0.95);
        cfg.gen.sampling.unlabeled_fraction = s.value("unlabeled_fraction", 0.2);
        cfg.gen.sampling.test_fraction = s.value("test_fraction", 0.25);
        cfg.ocs_per_topology = s.value("ocs_per_topology", std::size_t(170));
    }
    if (j.contains("simulation")) {
        const auto& s = j.at("simulation");
        cfg.gen.sim.horizon = s.value("horizon", 5.0);
        cfg.gen.sim.step = s.value("step", 0.01);
    }
    if (j.contains("static_security")) {
        const auto& s = j.at("static_security");
        cfg.gen.static_cfg.loading_limit = s.value("loading_limit", 1.0);
        cfg.gen.static_cfg.fx_cutoff = s.value("fx_cutoff", -1.0);
        cfg.gen.static_cfg.exponent = s.value("exponent", 2);
    }
    if (j.contains("boundary")) {
        const auto& b = j.at("boundary");
        cfg.gen.bisection_tol = b.value("bisection_tol", 0.02);
        cfg.boundary_samples = b.value("samples", std::size_t(500));
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        cfg.arch.latent_dim = m.value("latent_dim", std::size_t(16));
        cfg.arch.encoder_hidden = m.value("encoder_hidden", std::vector<std::size_t>{64});
        cfg.arch.decoder_hidden = m.value("decoder_hidden", std::vector<std::size_t>{64});
        cfg.arch.classifier_hidden = m.value("classifier_hidden", std::vector<std::size_t>{16});
        cfg.arch.mask_rate = m.value("mask_rate", 0.15);
        cfg.arch.dropout = m.value("dropout", 0.1);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        cfg.train_cfg.batch_size = t.value("batch_size", std::size_t(32));
        cfg.train_cfg.max_epochs_per_stage = t.value("max_epochs_per_stage", std::size_t(60));
        cfg.train_cfg.learning_rate = t.value("learning_rate", 1e-3);
        cfg.train_cfg.convergence_tol = t.value("convergence_tol", 1e-4);
        cfg.train_cfg.convergence_window = t.value("convergence_window", std::size_t(5));
    }
    if (j.contains("attack")) {
        const auto& a = j.at("attack");
        cfg.attack.epsilon = a.value("epsilon", 0.05);
        cfg.attack.surrogate_fraction = a.value("surrogate_fraction", 0.5);
    }
    if (j.contains("toposim")) {
        const auto& t = j.at("toposim");
        if (t.contains("threshold") && t.at("threshold").is_number())
            cfg.toposim_threshold = t.at("threshold").get<double>();
        cfg.toposim_drop_tol = t.value("f2_drop_tolerance", 5.0);
    }
    if (j.contains("benchmark")) {
        const auto& b = j.at("benchmark");
        cfg.benchmark_ocs = b.value("ocs", std::size_t(50));
        cfg.benchmark_reps = b.value("reps", std::size_t(5));
    }
    cfg.config_hash = fnv1a(text.data(), text.size());
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    auto cfg = parse(read_file(path));
    // interpret data files relative to the config location
    const fs::path base = fs::path(path).parent_path();
    auto rebase = [&](std::string& p) {
        if (!p.empty() && !fs::path(p).is_absolute() && !fs::exists(p) && fs::exists(base / p))
            p = (base / p).string();
    };
    rebase(cfg.grid_file);
    rebase(cfg.contingency_file);
    return cfg;
}

std::string PipelineConfig::provenance() const {
    char buf[80];
    std::snprintf(buf, sizeof buf, "config_hash=%016llx master_seed=%llu",
                  (unsigned long long)config_hash, (unsigned long long)master_seed);
    return buf;
}

ExperimentData load_experiment(const PipelineConfig& cfg) {
    ExperimentData exp;
    exp.base = grid::load_grid(cfg.grid_file);
    exp.contingencies = dynsim::load_contingencies(cfg.contingency_file, exp.base);
    exp.seen.push_back(exp.base);
    for (const auto& t : cfg.derived_topologies)
        exp.seen.push_back(datagen::apply_topology_change(exp.base, t.removed_lines, t.id));
    if (!cfg.dissimilar_topology.id.empty())
        exp.dissimilar = datagen::apply_topology_change(exp.base,
                                                        cfg.dissimilar_topology.removed_lines,
                                                        cfg.dissimilar_topology.id);
    return exp;
}

datagen::Database build_database(const PipelineConfig& cfg, const ExperimentData& exp,
                                 const std::string& mode) {
    datagen::GenConfig gen = cfg.gen;
    std::vector<grid::GridModel> topologies = exp.seen;
    if (!exp.dissimilar.topology_id.empty() && exp.dissimilar.topology_id != "base" &&
        mode == "tds") {
        topologies.push_back(exp.dissimilar);
        gen.test_only_topologies.push_back(exp.dissimilar.topology_id);
    }
    datagen::Database db;
    if (mode == "tds") {
        db = datagen::generate_tds_database(topologies, exp.contingencies, cfg.ocs_per_topology,
                                            cfg.master_seed, gen);
    } else if (mode == "boundary") {
        // boundary generation runs on the base system; it feeds the density
        // comparison rather than the topology study
        db = datagen::generate_boundary_database(std::vector<grid::GridModel>{exp.base},
                                                 exp.contingencies, cfg.boundary_samples,
                                                 cfg.master_seed, gen);
    } else {
        throw std::invalid_argument("unknown generation mode: " + mode);
    }
    db.config_hash = cfg.config_hash;
    // record line removals so similarity tooling can rebuild each topology
    for (auto& t : db.topologies) {
        if (t.id == exp.base.topology_id) continue;
        for (const auto& d : cfg.derived_topologies)
            if (d.id == t.id) t.removed_lines = d.removed_lines;
        if (t.id == cfg.dissimilar_topology.id) t.removed_lines = cfg.dissimilar_topology.removed_lines;
    }
    return db;
}

SplitView make_split(const datagen::Database& db, bool include_test_only_train) {
    const std::set<std::string> test_only(db.test_only_topologies.begin(),
                                          db.test_only_topologies.end());
    enum class Use { Train, Eval, Unused };
    std::vector<Use> use(db.samples.size(), Use::Unused);
    std::map<std::string, std::size_t> test_only_counter;
    for (std::size_t i = 0; i < db.samples.size(); ++i) {
        const auto& s = db.samples[i];
        if (test_only.count(s.oc.topology_id)) {
            // alternate retrain pool (even) and fixed evaluation half (odd)
            const std::size_t k = test_only_counter[s.oc.topology_id]++;
            if (k % 2 == 0) use[i] = include_test_only_train ? Use::Train : Use::Unused;
            else use[i] = s.labeled ? Use::Eval : Use::Unused;
        } else if (s.split == "train") {
            use[i] = Use::Train;
        } else {
            use[i] = s.labeled ? Use::Eval : Use::Unused;
        }
    }

    const std::size_t m = db.layout.m();
    std::vector<std::size_t> train_rows, eval_rows;
    for (std::size_t i = 0; i < db.samples.size(); ++i) {
        if (use[i] == Use::Train) train_rows.push_back(i);
        else if (use[i] == Use::Eval) eval_rows.push_back(i);
    }
    if (train_rows.empty()) throw std::invalid_argument("split: no training rows");

    Matrix train_raw(train_rows.size(), m);
    for (std::size_t r = 0; r < train_rows.size(); ++r)
        for (std::size_t c = 0; c < m; ++c)
            train_raw(r, c) = db.samples[train_rows[r]].oc.features[c];

    SplitView view;
    view.normalizer.fit(train_raw);

    auto fill = [&](const std::vector<std::size_t>& rows, ssmtl::Dataset& ds) {
        ds.x = Matrix(rows.size(), m);
        ds.contingency.resize(rows.size());
        ds.label.resize(rows.size());
        ds.topology.resize(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& s = db.samples[rows[r]];
            const auto norm = view.normalizer.apply(s.oc.features);
            for (std::size_t c = 0; c < m; ++c) ds.x(r, c) = norm[c];
            ds.contingency[r] = s.contingency_index;
            ds.label[r] = s.labeled ? s.label : -1;
            ds.topology[r] = s.oc.topology_id;
        }
    };
    fill(train_rows, view.train);
    fill(eval_rows, view.eval);

    std::string split_tags(db.samples.size(), 'u');
    for (std::size_t i = 0; i < db.samples.size(); ++i)
        split_tags[i] = use[i] == Use::Train ? 't' : (use[i] == Use::Eval ? 'e' : 'u');
    view.split_hash = fnv1a(split_tags.data(), split_tags.size());
    return view;
}

namespace {

Matrix with_condition(const Matrix& x, const std::vector<int>& contingency, std::size_t C) {
    Matrix out(x.rows, x.cols + C);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = x(r, c);
        out(r, x.cols + std::size_t(contingency[r])) = 1.0;
    }
    return out;
}

// one covariance reference row per distinct operating condition
Matrix dedupe_rows(const Matrix& x) {
    std::set<std::uint64_t> seen;
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < x.rows; ++r) {
        const auto h = fnv1a(&x.a[r * x.cols], x.cols * sizeof(double));
        if (seen.insert(h).second) keep.push_back(r);
    }
    Matrix out(keep.size(), x.cols);
    for (std::size_t r = 0; r < keep.size(); ++r)
        for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = x(keep[r], c);
    return out;
}

} // namespace

TrainedArtifacts train_models(const datagen::Database& db, const PipelineConfig& cfg,
                              std::uint64_t seed, bool include_test_only_train) {
    SplitView split = make_split(db, include_test_only_train);
    const std::size_t m = db.layout.m();
    const std::size_t C = db.contingency_vocab.size();

    TrainedArtifacts art;
    art.normalizer = split.normalizer;
    art.split_hash = split.split_hash;

    Rng init_rng(Rng::derive(seed, 21));
    art.model = ssmtl::build_model(m, C, cfg.arch, init_rng);
    art.model.contingency_vocab = db.contingency_vocab;
    art.model.layout = db.layout;

    ssmtl::TrainingConfig tc = cfg.train_cfg;
    tc.seed = Rng::derive(seed, 22);
    art.train_log = ssmtl::train(art.model, split.train, tc, cfg.schedule);

    // raw-feature baseline on the identical split (fraction 1.0)
    std::vector<std::size_t> labeled_rows;
    for (std::size_t r = 0; r < split.train.x.rows; ++r)
        if (split.train.label[r] >= 0) labeled_rows.push_back(r);
    Matrix xl(labeled_rows.size(), m);
    std::vector<int> cl(labeled_rows.size());
    std::vector<int> yl(labeled_rows.size());
    for (std::size_t r = 0; r < labeled_rows.size(); ++r) {
        for (std::size_t c = 0; c < m; ++c) xl(r, c) = split.train.x(labeled_rows[r], c);
        cl[r] = split.train.contingency[labeled_rows[r]];
        yl[r] = split.train.label[labeled_rows[r]];
    }
    robustness::SurrogateConfig bcfg = cfg.surrogate;
    art.baseline = robustness::train_surrogate(with_condition(xl, cl, C), yl, 1.0,
                                               Rng::derive(seed, 23), bcfg);

    art.covariance = confidence::fit_covariance(dedupe_rows(split.train.x));
    return art;
}

double baseline_probability(const neural::Network& baseline, const std::vector<double>& x_norm,
                            int contingency_index, std::size_t contingency_count) {
    Matrix in(1, x_norm.size() + contingency_count);
    for (std::size_t i = 0; i < x_norm.size(); ++i) in(0, i) = x_norm[i];
    in(0, x_norm.size() + std::size_t(contingency_index)) = 1.0;
    const Matrix logit = neural::forward(baseline, in);
    return 1.0 / (1.0 + std::exp(-logit(0, 0)));
}

EvalPair evaluate_models(const TrainedArtifacts& art, const SplitView& split) {
    const auto& ds = split.eval;
    const auto preds = ssmtl::predict_batch(art.model, ds.x, ds.contingency);
    std::vector<int> ssmtl_labels(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) ssmtl_labels[i] = preds[i].label;

    const std::size_t C = art.model.contingency_count;
    std::vector<int> base_labels(ds.x.rows);
    for (std::size_t r = 0; r < ds.x.rows; ++r) {
        std::vector<double> row(ds.x.cols);
        for (std::size_t c = 0; c < ds.x.cols; ++c) row[c] = ds.x(r, c);
        const double p = baseline_probability(art.baseline, row, ds.contingency[r], C);
        base_labels[r] = p >= 0.5 ? 1 : 0;
    }

    EvalPair pair;
    pair.ssmtl = metrics::evaluate(ssmtl_labels, ds.label, ds.topology);
    pair.baseline = metrics::evaluate(base_labels, ds.label, ds.topology);
    return pair;
}

AttackOutcome run_attack(const TrainedArtifacts& art, const SplitView& split,
                         const PipelineConfig& cfg, std::uint64_t seed,
                         const std::vector<std::string>& exclude_topologies) {
    const std::size_t m = art.model.feature_dim;
    const std::size_t C = art.model.contingency_count;

    // surrogate from a fraction of the labeled training rows
    std::vector<std::size_t> labeled_rows;
    for (std::size_t r = 0; r < split.train.x.rows; ++r)
        if (split.train.label[r] >= 0) labeled_rows.push_back(r);
    Matrix xl(labeled_rows.size(), m);
    std::vector<int> cl(labeled_rows.size()), yl(labeled_rows.size());
    for (std::size_t r = 0; r < labeled_rows.size(); ++r) {
        for (std::size_t c = 0; c < m; ++c) xl(r, c) = split.train.x(labeled_rows[r], c);
        cl[r] = split.train.contingency[labeled_rows[r]];
        yl[r] = split.train.label[labeled_rows[r]];
    }
    const auto surrogate =
        robustness::train_surrogate(with_condition(xl, cl, C), yl, cfg.attack.surrogate_fraction,
                                    Rng::derive(seed, 31), cfg.surrogate);

    const std::set<std::string> excluded(exclude_topologies.begin(), exclude_topologies.end());
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < split.eval.x.rows; ++r)
        if (!excluded.count(split.eval.topology[r])) rows.push_back(r);

    Matrix x(rows.size(), m);
    std::vector<int> cont(rows.size()), lab(rows.size());
    std::vector<std::string> topo(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < m; ++c) x(r, c) = split.eval.x(rows[r], c);
        cont[r] = split.eval.contingency[rows[r]];
        lab[r] = split.eval.label[rows[r]];
        topo[r] = split.eval.topology[rows[r]];
    }

    robustness::ModelUnderTest ssmtl_mut;
    const auto* model = &art.model;
    ssmtl_mut.probability = [model](const std::vector<double>& row, int c) {
        Matrix xb(1, row.size());
        for (std::size_t i = 0; i < row.size(); ++i) xb(0, i) = row[i];
        return ssmtl::predict_batch(*model, xb, {c})[0].probability;
    };
    robustness::ModelUnderTest base_mut;
    const auto* baseline = &art.baseline;
    base_mut.probability = [baseline, C](const std::vector<double>& row, int c) {
        return baseline_probability(*baseline, row, c, C);
    };

    AttackOutcome out;
    robustness::AttackConfig acfg = cfg.attack;
    acfg.seed = seed;
    out.ssmtl = robustness::evaluate_resilience(ssmtl_mut, surrogate, x, cont, lab, topo, acfg);
    out.baseline = robustness::evaluate_resilience(base_mut, surrogate, x, cont, lab, topo, acfg);
    return out;
}

CalibrationOutcome run_calibration(const TrainedArtifacts& art, const SplitView& split,
                                   const ExperimentData& exp, const PipelineConfig& cfg) {
    CalibrationOutcome out;
    for (const auto& g : exp.seen) out.known_svs.push_back(toposim::compute_svs(g));

    // per-topology F2 of the frozen model on its evaluation rows
    const auto preds = ssmtl::predict_batch(art.model, split.eval.x, split.eval.contingency);
    std::vector<int> labels(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) labels[i] = preds[i].label;
    const auto report = metrics::evaluate(labels, split.eval.label, split.eval.topology);

    std::map<std::string, double> f2_by_topo;
    for (const auto& tm : report.per_topology) f2_by_topo[tm.topology_id] = tm.f2;

    auto mean_rmse_for = [&](const toposim::SvSequence& s, bool exclude_self) {
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& k : out.known_svs) {
            if (exclude_self && k.topology_id == s.topology_id) continue;
            total += toposim::svs_rmse(s, k);
            ++count;
        }
        return count ? total / double(count) : 0.0;
    };

    std::vector<toposim::CalibrationEntry> entries;
    for (const auto& g : exp.seen) {
        if (!f2_by_topo.count(g.topology_id)) continue;
        toposim::CalibrationEntry e;
        e.topology_id = g.topology_id;
        e.mean_rmse = mean_rmse_for(toposim::compute_svs(g), true);
        e.f2 = f2_by_topo[g.topology_id];
        e.seen_in_training = true;
        entries.push_back(e);
    }
    if (!exp.dissimilar.topology_id.empty() && f2_by_topo.count(exp.dissimilar.topology_id)) {
        toposim::CalibrationEntry e;
        e.topology_id = exp.dissimilar.topology_id;
        e.mean_rmse = mean_rmse_for(toposim::compute_svs(exp.dissimilar), false);
        e.f2 = f2_by_topo[exp.dissimilar.topology_id];
        e.seen_in_training = false;
        entries.push_back(e);
    }

    out.calibration = toposim::calibrate_threshold(entries, cfg.toposim_drop_tol);
    const double h = cfg.toposim_threshold.value_or(out.calibration.threshold);
    out.dissimilar_gate = toposim::gate_new_topology(exp.dissimilar, out.known_svs, h);
    return out;
}

namespace {

struct SeedOutcome {
    double ssmtl_f2_seen = 0.0;
    double baseline_f2_seen = 0.0;
    double ssmtl_drop = 0.0;
    double baseline_drop = 0.0;
    double dissimilar_before = 0.0;
    double dissimilar_after = 0.0;
    bool max_rmse_is_dissimilar = false;
    bool min_f2_is_dissimilar = false;
};

double seen_f2(const metrics::MetricReport& rep, const std::string& dissimilar_id) {
    metrics::ConfusionMatrix seen;
    for (const auto& tm : rep.per_topology) {
        if (tm.topology_id == dissimilar_id) continue;
        seen += tm.cm;
    }
    return metrics::f_beta(seen, rep.beta);
}

double topo_f2(const metrics::MetricReport& rep, const std::string& id) {
    for (const auto& tm : rep.per_topology)
        if (tm.topology_id == id) return tm.f2;
    return 0.0;
}

void save_artifacts(const std::string& dir, const TrainedArtifacts& art,
                    const PipelineConfig& cfg, std::uint64_t seed, const std::string& suffix) {
    write_file(dir + "/model_ssmtl" + suffix + ".json", ssmtl::model_to_json(art.model));
    json jb;
    jb["format_version"] = 1;
    jb["C"] = art.model.contingency_count;
    jb["m"] = art.model.feature_dim;
    jb["network"] = json::parse(neural::network_to_json(art.baseline));
    write_file(dir + "/model_baseline" + suffix + ".json", jb.dump());
    write_file(dir + "/normalizer" + suffix + ".json", art.normalizer.to_json());
    write_file(dir + "/covariance" + suffix + ".json",
               confidence::covariance_to_json(art.covariance));
    char prov[160];
    std::snprintf(prov, sizeof prov, "%s seed=%llu split_hash=%016llx", cfg.provenance().c_str(),
                  (unsigned long long)seed, (unsigned long long)art.split_hash);
    ssmtl::write_training_log_csv(art.train_log, dir + "/train_log" + suffix + ".csv", prov);
}

} // namespace

ReproduceSummary cmd_reproduce(const PipelineConfig& cfg) {
    const auto exp = load_experiment(cfg);
    fs::create_directories(cfg.output_dir);
    fs::create_directories(cfg.output_dir + "/report");

    const auto db_tds = build_database(cfg, exp, "tds");
    datagen::write_database(db_tds, cfg.output_dir + "/database_tds.jsonl",
                            cfg.output_dir + "/database_tds.meta.json");
    const auto db_boundary = build_database(cfg, exp, "boundary");
    datagen::write_database(db_boundary, cfg.output_dir + "/database_boundary.jsonl",
                            cfg.output_dir + "/database_boundary.meta.json");

    ReproduceSummary sum;
    std::vector<SeedOutcome> outcomes;
    toposim::CalibrationResult last_calibration;
    std::optional<TrainedArtifacts> first_art;

    for (std::uint64_t seed : cfg.seeds) {
        const std::string dir = cfg.output_dir + "/seed_" + std::to_string(seed);
        fs::create_directories(dir);

        const auto art = train_models(db_tds, cfg, seed, false);
        if (!first_art) first_art = art;
        save_artifacts(dir, art, cfg, seed, "");
        const auto split = make_split(db_tds, false);

        const auto evals = evaluate_models(art, split);
        const std::string prov = cfg.provenance() + " seed=" + std::to_string(seed);
        metrics::write_report_csv(evals.ssmtl, dir + "/eval_ssmtl.csv", prov);
        metrics::write_report_csv(evals.baseline, dir + "/eval_baseline.csv", prov);

        const auto attack = run_attack(art, split, cfg, seed, {exp.dissimilar.topology_id});
        {
            std::ofstream out(dir + "/attack.csv");
            out << "# " << prov << "\n";
            out << "model,epsilon,clean_f2,attacked_f2,drop,mean_loss_increase,flips,samples\n";
            char buf[200];
            auto line = [&](const char* name, const robustness::AttackReport& r) {
                std::size_t flips = 0;
                for (char f : r.flipped) flips += std::size_t(f);
                std::snprintf(buf, sizeof buf, "%s,%.6g,%.6f,%.6f,%.6f,%.6g,%zu,%zu\n", name,
                              r.epsilon, r.clean_f2, r.attacked_f2, r.clean_f2 - r.attacked_f2,
                              r.mean_loss_increase, flips, r.samples);
                out << buf;
            };
            line("ssmtl", attack.ssmtl);
            line("baseline", attack.baseline);
        }

        const auto calib = run_calibration(art, split, exp, cfg);
        toposim::write_calibration_csv(calib.calibration, dir + "/calibration.csv", prov);
        write_file(dir + "/gate_dissimilar.json",
                   toposim::decision_to_json(calib.dissimilar_gate, exp.dissimilar.topology_id));
        last_calibration = calib.calibration;

        // retrain with the dissimilar topology's retrain pool included
        const auto art2 = train_models(db_tds, cfg, seed, true);
        save_artifacts(dir, art2, cfg, seed, "_retrained");
        const auto split2 = make_split(db_tds, true);
        const auto evals2 = evaluate_models(art2, split2);
        metrics::write_report_csv(evals2.ssmtl, dir + "/eval_ssmtl_retrained.csv", prov);

        SeedOutcome so;
        so.ssmtl_f2_seen = seen_f2(evals.ssmtl, exp.dissimilar.topology_id);
        so.baseline_f2_seen = seen_f2(evals.baseline, exp.dissimilar.topology_id);
        so.ssmtl_drop = attack.ssmtl.clean_f2 - attack.ssmtl.attacked_f2;
        so.baseline_drop = attack.baseline.clean_f2 - attack.baseline.attacked_f2;
        so.dissimilar_before = topo_f2(evals.ssmtl, exp.dissimilar.topology_id);
        so.dissimilar_after = topo_f2(evals2.ssmtl, exp.dissimilar.topology_id);
        if (!calib.calibration.table.empty()) {
            const auto& table = calib.calibration.table;
            so.max_rmse_is_dissimilar = table.back().topology_id == exp.dissimilar.topology_id;
            double min_f2 = 2.0;
            std::string min_id;
            for (const auto& e : table)
                if (e.f2 < min_f2) {
                    min_f2 = e.f2;
                    min_id = e.topology_id;
                }
            so.min_f2_is_dissimilar = min_id == exp.dissimilar.topology_id;
        }
        outcomes.push_back(so);
    }

    // speed benchmark with the first seed's model
    const TrainedArtifacts& art0 = *first_art;
    const auto nominal = grid::solve_power_flow(exp.base);
    std::vector<std::vector<double>> bench_ocs;
    {
        const auto split = make_split(db_tds, false);
        for (std::size_t r = 0; r < split.eval.x.rows && bench_ocs.size() < cfg.benchmark_ocs;
             ++r) {
            std::vector<double> raw(split.eval.x.cols);
            for (std::size_t c = 0; c < split.eval.x.cols; ++c)
                raw[c] = split.eval.x(r, c) * art0.normalizer.std_dev[c] + art0.normalizer.mean[c];
            bench_ocs.push_back(std::move(raw));
        }
    }
    const auto* m0 = &art0.model;
    const auto* nz = &art0.normalizer;
    auto infer = [m0, nz](const std::vector<double>& raw, int c) {
        (void)ssmtl::predict(*m0, nz->apply(raw), c);
    };
    const auto bench = metrics::benchmark_speed(exp.base, nominal, exp.contingencies, infer,
                                                bench_ocs, cfg.benchmark_reps);
    sum.benchmark_speedup = bench.speedup;
    {
        std::ofstream out(cfg.output_dir + "/report/benchmark.csv");
        out << "# " << cfg.provenance() << "\n";
        out << "# TDS column is per contingency; model column covers all " << bench.contingencies
            << " contingencies per operating condition\n";
        out << "system,tds_ms,model_ms,speedup\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.2f\n", bench.system.c_str(), bench.tds_ms,
                      bench.model_ms, bench.speedup);
        out << buf;
    }

    auto mean_of = [&](auto field) {
        double s = 0.0;
        for (const auto& o : outcomes) s += field(o);
        return outcomes.empty() ? 0.0 : s / double(outcomes.size());
    };
    sum.ssmtl_f2_seen_mean = mean_of([](const SeedOutcome& o) { return o.ssmtl_f2_seen; });
    sum.baseline_f2_seen_mean = mean_of([](const SeedOutcome& o) { return o.baseline_f2_seen; });
    sum.ssmtl_drop_mean = mean_of([](const SeedOutcome& o) { return o.ssmtl_drop; });
    sum.baseline_drop_mean = mean_of([](const SeedOutcome& o) { return o.baseline_drop; });
    sum.dissimilar_f2_before_mean =
        mean_of([](const SeedOutcome& o) { return o.dissimilar_before; });
    sum.dissimilar_f2_after_mean = mean_of([](const SeedOutcome& o) { return o.dissimilar_after; });
    sum.dissimilar_has_max_rmse =
        std::all_of(outcomes.begin(), outcomes.end(),
                    [](const SeedOutcome& o) { return o.max_rmse_is_dissimilar; });
    sum.dissimilar_has_min_f2 =
        std::all_of(outcomes.begin(), outcomes.end(),
                    [](const SeedOutcome& o) { return o.min_f2_is_dissimilar; });

    {
        std::ofstream out(cfg.output_dir + "/report/f2_summary.csv");
        out << "# " << cfg.provenance() << "\n";
        out << "seed,ssmtl_f2_seen,baseline_f2_seen,dissimilar_f2_before,dissimilar_f2_after\n";
        char buf[200];
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f,%.6f,%.6f\n",
                          (unsigned long long)cfg.seeds[i], outcomes[i].ssmtl_f2_seen,
                          outcomes[i].baseline_f2_seen, outcomes[i].dissimilar_before,
                          outcomes[i].dissimilar_after);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f,%.6f,%.6f\n", sum.ssmtl_f2_seen_mean,
                      sum.baseline_f2_seen_mean, sum.dissimilar_f2_before_mean,
                      sum.dissimilar_f2_after_mean);
        out << buf;
    }
    {
        std::ofstream out(cfg.output_dir + "/report/attack_summary.csv");
        out << "# " << cfg.provenance() << "\n";
        out << "seed,ssmtl_drop,baseline_drop\n";
        char buf[120];
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f\n", (unsigned long long)cfg.seeds[i],
                          outcomes[i].ssmtl_drop, outcomes[i].baseline_drop);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f\n", sum.ssmtl_drop_mean,
                      sum.baseline_drop_mean);
        out << buf;
    }
    {
        std::ostringstream os;
        os << "reproduction report (" << cfg.provenance() << ")\n";
        os << "seen-topology F2 (mean over " << outcomes.size()
           << " seeds): ssmtl=" << sum.ssmtl_f2_seen_mean
           << " baseline=" << sum.baseline_f2_seen_mean << "\n";
        os << "attack F2 drop at epsilon=" << cfg.attack.epsilon
           << ": ssmtl=" << sum.ssmtl_drop_mean << " baseline=" << sum.baseline_drop_mean << "\n";
        os << "dissimilar topology " << exp.dissimilar.topology_id
           << ": F2 before=" << sum.dissimilar_f2_before_mean
           << " after retrain=" << sum.dissimilar_f2_after_mean << "\n";
        os << "dissimilar has max mean RMSE in calibration table: "
           << (sum.dissimilar_has_max_rmse ? "yes" : "no") << "\n";
        os << "dissimilar has min F2 in calibration table: "
           << (sum.dissimilar_has_min_f2 ? "yes" : "no") << "\n";
        os << "speed: see report/benchmark.csv (timings are machine-dependent)\n";
        write_file(cfg.output_dir + "/report/summary.txt", os.str());
    }
    return sum;
}

int cmd_generate(const PipelineConfig& cfg, const std::string& mode) {
    const auto exp = load_experiment(cfg);
    fs::create_directories(cfg.output_dir);
    const auto db = build_database(cfg, exp, mode);
    datagen::write_database(db, cfg.output_dir + "/database_" + mode + ".jsonl",
                            cfg.output_dir + "/database_" + mode + ".meta.json");
    if (!cfg.trace_dir.empty()) {
        fs::create_directories(cfg.trace_dir);
        const auto nominal = grid::solve_power_flow(exp.base);
        for (const auto& c : exp.contingencies) {
            const auto sim = dynsim::simulate(exp.base, nominal, c, cfg.gen.sim);
            dynsim::write_trace_csv(sim, cfg.trace_dir + "/trace_" + c.id + ".csv");
        }
    }
    return 0;
}

int cmd_train(const PipelineConfig& cfg) {
    const auto exp = load_experiment(cfg);
    fs::create_directories(cfg.output_dir);
    const std::string jsonl = cfg.output_dir + "/database_" + cfg.mode + ".jsonl";
    const std::string meta = cfg.output_dir + "/database_" + cfg.mode + ".meta.json";
    datagen::Database db;
    if (fs::exists(jsonl) && fs::exists(meta)) {
        db = datagen::read_database(jsonl, meta);
    } else {
        db = build_database(cfg, exp, cfg.mode);
        datagen::write_database(db, jsonl, meta);
    }
    const std::uint64_t seed = cfg.seeds.front();
    const auto art = train_models(db, cfg, seed, false);
    save_artifacts(cfg.output_dir, art, cfg, seed, "");

    // similarity artifacts for the assess-time gate
    json sim;
    sim["format_version"] = 1;
    json topo = json::array();
    for (const auto& g : exp.seen) {
        const auto svs = toposim::compute_svs(g);
        topo.push_back({{"id", svs.topology_id}, {"svs", svs.values}});
    }
    sim["topologies"] = topo;
    if (cfg.toposim_threshold) {
        sim["threshold"] = *cfg.toposim_threshold;
    } else {
        const auto split = make_split(db, false);
        const auto calib = run_calibration(art, split, exp, cfg);
        sim["threshold"] = calib.calibration.threshold;
        toposim::write_calibration_csv(calib.calibration, cfg.output_dir + "/calibration.csv",
                                       cfg.provenance());
    }
    write_file(cfg.output_dir + "/similarity.json", sim.dump(2));

    json manifest;
    manifest["config_hash"] = cfg.provenance();
    manifest["seed"] = std::to_string(seed);
    char h[32];
    std::snprintf(h, sizeof h, "%016llx", (unsigned long long)art.split_hash);
    manifest["split_hash"] = h;
    write_file(cfg.output_dir + "/manifest.json", manifest.dump(2));
    return 0;
}

int cmd_assess(const PipelineConfig& cfg, const std::string& artifact_dir,
               const std::string& oc_file, std::optional<int> contingency_override,
               const std::string& gate_grid_file, const std::string& out_file) {
    const auto model = ssmtl::model_from_json(read_file(artifact_dir + "/model_ssmtl.json"));
    const auto normalizer = Normalizer::from_json(read_file(artifact_dir + "/normalizer.json"));
    const auto cov =
        confidence::covariance_from_json(read_file(artifact_dir + "/covariance.json"));

    std::vector<toposim::SvSequence> known;
    double threshold = std::numeric_limits<double>::infinity();
    const std::string sim_path = artifact_dir + "/similarity.json";
    if (fs::exists(sim_path)) {
        json sim = json::parse(read_file(sim_path));
        for (const auto& jt : sim.at("topologies")) {
            toposim::SvSequence s;
            s.topology_id = jt.at("id").get<std::string>();
            s.values = jt.at("svs").get<std::vector<double>>();
            known.push_back(std::move(s));
        }
        if (sim.at("threshold").is_number()) threshold = sim.at("threshold").get<double>();
    }

    std::ifstream in(oc_file);
    if (!in) throw std::runtime_error("cannot open OC file: " + oc_file);
    std::ofstream out(out_file);
    if (!out) throw std::runtime_error("cannot open for writing: " + out_file);

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        const auto features = j.at("features").get<std::vector<double>>();
        const int cidx = contingency_override.value_or(j.value("contingency_index", 0));
        if (cidx < 0 || std::size_t(cidx) >= model.contingency_count)
            throw std::invalid_argument("unknown contingency index " + std::to_string(cidx));

        if (features.size() != model.feature_dim) {
            if (gate_grid_file.empty())
                throw ssmtl::TopologyMismatch(
                    "operating condition has " + std::to_string(features.size()) +
                    " features, model expects " + std::to_string(model.feature_dim) +
                    "; pass --grid to run the similarity gate");
            const auto new_grid = grid::load_grid(gate_grid_file);
            const auto decision = toposim::gate_new_topology(new_grid, known, threshold);
            json rec;
            rec["gate"] = json::parse(toposim::decision_to_json(decision, new_grid.topology_id));
            rec["note"] = "feature width mismatch; retrain recommended when mean_rmse > threshold";
            out << rec.dump() << "\n";
            continue;
        }

        const auto x = normalizer.apply(features);
        const auto pred = ssmtl::predict(model, x, cidx);
        const auto conf = confidence::confidence(cov, x);
        json rec;
        rec["label"] = pred.label;
        rec["probability"] = pred.probability;
        rec["avg_distance"] = conf.avg_distance;
        rec["percentile"] = conf.percentile;
        rec["band"] = conf.band;
        out << rec.dump() << "\n";
    }
    return 0;
}

int cmd_attack(const PipelineConfig& cfg) {
    const auto exp = load_experiment(cfg);
    const std::string jsonl = cfg.output_dir + "/database_" + cfg.mode + ".jsonl";
    const std::string meta = cfg.output_dir + "/database_" + cfg.mode + ".meta.json";
    if (!fs::exists(jsonl)) throw std::runtime_error("run generate first: missing " + jsonl);
    const auto db = datagen::read_database(jsonl, meta);
    const std::uint64_t seed = cfg.seeds.front();
    const auto art = train_models(db, cfg, seed, false);
    const auto split = make_split(db, false);
    const auto outcome = run_attack(art, split, cfg, seed);

    // attacked copy of the evaluation rows in the database schema
    std::vector<std::size_t> labeled_rows;
    for (std::size_t r = 0; r < split.train.x.rows; ++r)
        if (split.train.label[r] >= 0) labeled_rows.push_back(r);
    Matrix xl(labeled_rows.size(), db.layout.m());
    std::vector<int> cl(labeled_rows.size()), yl(labeled_rows.size());
    for (std::size_t r = 0; r < labeled_rows.size(); ++r) {
        for (std::size_t c = 0; c < db.layout.m(); ++c) xl(r, c) = split.train.x(labeled_rows[r], c);
        cl[r] = split.train.contingency[labeled_rows[r]];
        yl[r] = split.train.label[labeled_rows[r]];
    }
    const auto surrogate =
        robustness::train_surrogate(with_condition(xl, cl, db.contingency_vocab.size()), yl,
                                    cfg.attack.surrogate_fraction, Rng::derive(seed, 31),
                                    cfg.surrogate);
    const std::uint64_t surrogate_hash = [&] {
        const auto s = neural::network_to_json(surrogate);
        return fnv1a(s.data(), s.size());
    }();
    robustness::AttackConfig acfg = cfg.attack;
    const Matrix attacked =
        robustness::attack_dataset(surrogate, split.eval.x, split.eval.contingency,
                                   split.eval.label, db.contingency_vocab.size(), acfg);

    datagen::Database adv = db;
    adv.samples.clear();
    for (std::size_t r = 0; r < attacked.rows; ++r) {
        datagen::LabeledSample s;
        s.oc.topology_id = split.eval.topology[r];
        s.contingency_index = split.eval.contingency[r];
        s.label = split.eval.label[r];
        s.labeled = true;
        s.split = "test";
        s.oc.features.resize(attacked.cols);
        for (std::size_t c = 0; c < attacked.cols; ++c) s.oc.features[c] = attacked(r, c);
        adv.samples.push_back(std::move(s));
    }
    fs::create_directories(cfg.output_dir);
    datagen::write_database(adv, cfg.output_dir + "/database_attacked.jsonl",
                            cfg.output_dir + "/database_attacked.meta.json");
    // provenance rider for the attacked copy
    {
        json prov;
        prov["attack"] = "fgsm";
        prov["epsilon"] = cfg.attack.epsilon;
        char h[32];
        std::snprintf(h, sizeof h, "%016llx", (unsigned long long)surrogate_hash);
        prov["surrogate_hash"] = h;
        prov["note"] = "features are in normalized units";
        write_file(cfg.output_dir + "/database_attacked.provenance.json", prov.dump(2));
    }
    std::cout << "clean F2: ssmtl=" << outcome.ssmtl.clean_f2
              << " baseline=" << outcome.baseline.clean_f2 << "\n";
    std::cout << "attacked F2: ssmtl=" << outcome.ssmtl.attacked_f2
              << " baseline=" << outcome.baseline.attacked_f2 << "\n";
    return 0;
}

int cmd_calibrate(const PipelineConfig& cfg) {
    const auto exp = load_experiment(cfg);
    const std::string jsonl = cfg.output_dir + "/database_" + cfg.mode + ".jsonl";
    const std::string meta = cfg.output_dir + "/database_" + cfg.mode + ".meta.json";
    if (!fs::exists(jsonl)) throw std::runtime_error("run generate first: missing " + jsonl);
    const auto db = datagen::read_database(jsonl, meta);
    const auto art = train_models(db, cfg, cfg.seeds.front(), false);
    const auto split = make_split(db, false);
    const auto calib = run_calibration(art, split, exp, cfg);
    fs::create_directories(cfg.output_dir);
    toposim::write_calibration_csv(calib.calibration, cfg.output_dir + "/calibration.csv",
                                   cfg.provenance());
    write_file(cfg.output_dir + "/gate_dissimilar.json",
               toposim::decision_to_json(calib.dissimilar_gate, exp.dissimilar.topology_id));
    return 0;
}

int cmd_benchmark(const PipelineConfig& cfg) {
    const auto exp = load_experiment(cfg);
    const std::string jsonl = cfg.output_dir + "/database_" + cfg.mode + ".jsonl";
    const std::string meta = cfg.output_dir + "/database_" + cfg.mode + ".meta.json";
    datagen::Database db;
    if (fs::exists(jsonl) && fs::exists(meta)) db = datagen::read_database(jsonl, meta);
    else db = build_database(cfg, exp, cfg.mode);

    const auto art = train_models(db, cfg, cfg.seeds.front(), false);
    const auto nominal = grid::solve_power_flow(exp.base);
    const auto split = make_split(db, false);
    std::vector<std::vector<double>> ocs;
    for (std::size_t r = 0; r < split.eval.x.rows && ocs.size() < cfg.benchmark_ocs; ++r) {
        std::vector<double> raw(split.eval.x.cols);
        for (std::size_t c = 0; c < split.eval.x.cols; ++c)
            raw[c] = split.eval.x(r, c) * art.normalizer.std_dev[c] + art.normalizer.mean[c];
        ocs.push_back(std::move(raw));
    }
    const auto* m0 = &art.model;
    const auto* nz = &art.normalizer;
    auto infer = [m0, nz](const std::vector<double>& raw, int c) {
        (void)ssmtl::predict(*m0, nz->apply(raw), c);
    };
    const auto bench = metrics::benchmark_speed(exp.base, nominal, exp.contingencies, infer, ocs,
                                                cfg.benchmark_reps);
    std::printf("system,tds_ms,model_ms,speedup\n%s,%.4f,%.4f,%.2f\n", bench.system.c_str(),
                bench.tds_ms, bench.model_ms, bench.speedup);
    std::printf("note: TDS per contingency, model per OC across %zu contingencies\n",
                bench.contingencies);
    return 0;
}

} // namespace dsa::pipeline
