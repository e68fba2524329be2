#include "pbu/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pbu/datagen.hpp"
#include "pbu/errors.hpp"
#include "pbu/fisher.hpp"
#include "pbu/rng.hpp"

namespace pbu {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// fixed salts so every pipeline stage draws from its own seed stream
constexpr std::uint64_t kRetrainSalt = 0x7265747261696eull;
constexpr std::uint64_t kFinetuneSalt = 0x66696e6574756eull;

void expect_keys(const json& j, const std::string& section,
                 std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ParseError("config: section \"" + section + "\" must be a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known)
            throw ParseError("config: unknown key \"" + item.key() + "\" in section \"" + section +
                             "\"");
    }
}

template <class T>
void maybe_get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

Optimizer parse_optimizer(const std::string& s) {
    if (s == "adam") return Optimizer::Adam;
    if (s == "sgd") return Optimizer::Sgd;
    throw ParseError("config: optimizer must be \"adam\" or \"sgd\", got \"" + s + "\"");
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

TrainConfig parse_train_section(const json& j, const std::string& name, const TrainConfig& base) {
    expect_keys(j, name, {"optimizer", "learning_rate", "batch_size", "epochs"});
    TrainConfig cfg = base;
    if (j.contains("optimizer")) cfg.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    maybe_get(j, "learning_rate", cfg.learning_rate);
    maybe_get(j, "batch_size", cfg.batch_size);
    maybe_get(j, "epochs", cfg.epochs);
    return cfg;
}

double wall_seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out.good()) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace

std::string DatasetSection::identity() const {
    std::ostringstream os;
    if (kind == "csv") {
        os << "csv(" << train_csv << "|" << test_csv << ")";
        return os.str();
    }
    os << kind << "(d=" << d << ",C=" << classes << ",ntr=" << n_train_per_class
       << ",nte=" << n_test_per_class << ",";
    if (kind == "blobs")
        os << "spread=" << blob_spread;
    else
        os << "noise=" << ring_noise;
    os << ",seed=" << seed << ")";
    return os.str();
}

void DatasetSection::validate() const {
    if (kind != "blobs" && kind != "rings" && kind != "csv")
        throw ContractError("dataset: kind must be blobs, rings or csv");
    if (kind == "csv") {
        if (train_csv.empty() || test_csv.empty())
            throw ContractError("dataset: csv kind needs train_csv and test_csv paths");
        return;
    }
    if (classes < 2) throw ContractError("dataset: need at least 2 classes");
    if (n_train_per_class < 1 || n_test_per_class < 1)
        throw ContractError("dataset: per-class counts must be >= 1");
    if (kind == "blobs" && d < 1) throw ContractError("dataset: d must be >= 1");
}

ModelSpec ExperimentConfig::model_spec() const {
    ModelSpec spec;
    spec.input_dim = dataset.kind == "rings" ? 2 : dataset.d;
    spec.hidden_dims = hidden_dims;
    spec.num_classes = dataset.classes;
    return spec;
}

TrainConfig ExperimentConfig::finetune_config() const { return finetune ? *finetune : train; }

void ExperimentConfig::validate() const {
    dataset.validate();
    model_spec().validate();
    train.validate();
    finetune_config().validate();
    unlearn.validate();
    mia.validate();
    if (forget_class < 0 || forget_class >= dataset.classes)
        throw ContractError("config: forget_class must lie in {0..classes-1}");
    if (seeds.empty()) throw ContractError("config: seeds must be nonempty");
    if (variants.empty()) throw ContractError("config: variants must be nonempty");
    for (const std::string& v : variants)
        if (v != "initial" && v != "retrain" && v != "finetune" && v != "pbu")
            throw ContractError("config: unknown variant \"" + v + "\"");
}

ExperimentConfig parse_config(const json& j) {
    expect_keys(j, "top level",
                {"dataset", "model", "train", "finetune", "unlearn", "mia", "seeds", "output_dir",
                 "variants", "ablate"});
    ExperimentConfig cfg;

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        expect_keys(d, "dataset",
                    {"kind", "d", "classes", "n_train_per_class", "n_test_per_class",
                     "blob_spread", "ring_noise", "seed", "train_csv", "test_csv"});
        maybe_get(d, "kind", cfg.dataset.kind);
        maybe_get(d, "d", cfg.dataset.d);
        maybe_get(d, "classes", cfg.dataset.classes);
        maybe_get(d, "n_train_per_class", cfg.dataset.n_train_per_class);
        maybe_get(d, "n_test_per_class", cfg.dataset.n_test_per_class);
        maybe_get(d, "blob_spread", cfg.dataset.blob_spread);
        maybe_get(d, "ring_noise", cfg.dataset.ring_noise);
        maybe_get(d, "seed", cfg.dataset.seed);
        maybe_get(d, "train_csv", cfg.dataset.train_csv);
        maybe_get(d, "test_csv", cfg.dataset.test_csv);
    }
    if (j.contains("model")) {
        expect_keys(j.at("model"), "model", {"hidden_dims"});
        maybe_get(j.at("model"), "hidden_dims", cfg.hidden_dims);
    }
    if (j.contains("train")) cfg.train = parse_train_section(j.at("train"), "train", cfg.train);
    if (j.contains("finetune"))
        cfg.finetune = parse_train_section(j.at("finetune"), "finetune", cfg.train);
    if (j.contains("unlearn")) {
        const json& u = j.at("unlearn");
        expect_keys(u, "unlearn",
                    {"alpha", "beta", "gamma", "eta", "steps", "fisher_mode", "fisher_form",
                     "optimizer", "batch_size", "forget_class"});
        maybe_get(u, "alpha", cfg.unlearn.alpha);
        maybe_get(u, "beta", cfg.unlearn.beta);
        maybe_get(u, "gamma", cfg.unlearn.gamma);
        maybe_get(u, "eta", cfg.unlearn.eta);
        maybe_get(u, "steps", cfg.unlearn.steps);
        maybe_get(u, "batch_size", cfg.unlearn.batch_size);
        maybe_get(u, "forget_class", cfg.forget_class);
        if (u.contains("fisher_mode")) {
            const std::string s = u.at("fisher_mode").get<std::string>();
            if (s == "empirical")
                cfg.unlearn.fisher_mode = FisherMode::Empirical;
            else if (s == "model")
                cfg.unlearn.fisher_mode = FisherMode::Model;
            else
                throw ParseError("config: fisher_mode must be \"empirical\" or \"model\"");
        }
        if (u.contains("fisher_form")) {
            const std::string s = u.at("fisher_form").get<std::string>();
            if (s == "diagonal")
                cfg.unlearn.fisher_form = FisherForm::Diagonal;
            else if (s == "full")
                cfg.unlearn.fisher_form = FisherForm::Full;
            else
                throw ParseError("config: fisher_form must be \"diagonal\" or \"full\"");
        }
        if (u.contains("optimizer")) {
            const std::string s = u.at("optimizer").get<std::string>();
            if (s == "gd")
                cfg.unlearn.optimizer = UnlearnOptimizer::PlainGd;
            else if (s == "adam")
                cfg.unlearn.optimizer = UnlearnOptimizer::Adam;
            else
                throw ParseError("config: unlearn optimizer must be \"gd\" or \"adam\"");
        }
    }
    if (j.contains("mia")) {
        const json& m = j.at("mia");
        expect_keys(m, "mia", {"attacker_split_fraction", "balance"});
        maybe_get(m, "attacker_split_fraction", cfg.mia.attacker_split_fraction);
        maybe_get(m, "balance", cfg.mia.balance);
    }
    maybe_get(j, "seeds", cfg.seeds);
    maybe_get(j, "output_dir", cfg.output_dir);
    maybe_get(j, "variants", cfg.variants);
    if (j.contains("ablate")) {
        expect_keys(j.at("ablate"), "ablate", {"alphas"});
        maybe_get(j.at("ablate"), "alphas", cfg.ablate_alphas);
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("config " + path + ": " + e.what());
    }
    return parse_config(j);
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["dataset"] = {{"kind", cfg.dataset.kind},
                    {"d", cfg.dataset.d},
                    {"classes", cfg.dataset.classes},
                    {"n_train_per_class", cfg.dataset.n_train_per_class},
                    {"n_test_per_class", cfg.dataset.n_test_per_class},
                    {"blob_spread", cfg.dataset.blob_spread},
                    {"ring_noise", cfg.dataset.ring_noise},
                    {"seed", cfg.dataset.seed}};
    if (cfg.dataset.kind == "csv") {
        j["dataset"]["train_csv"] = cfg.dataset.train_csv;
        j["dataset"]["test_csv"] = cfg.dataset.test_csv;
    }
    j["model"] = {{"hidden_dims", cfg.hidden_dims}};
    j["train"] = {{"optimizer", optimizer_name(cfg.train.optimizer)},
                  {"learning_rate", cfg.train.learning_rate},
                  {"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs}};
    const TrainConfig ft = cfg.finetune_config();
    j["finetune"] = {{"optimizer", optimizer_name(ft.optimizer)},
                     {"learning_rate", ft.learning_rate},
                     {"batch_size", ft.batch_size},
                     {"epochs", ft.epochs}};
    j["unlearn"] = {
        {"alpha", cfg.unlearn.alpha},
        {"beta", cfg.unlearn.beta},
        {"gamma", cfg.unlearn.gamma},
        {"eta", cfg.unlearn.eta},
        {"steps", cfg.unlearn.steps},
        {"fisher_mode", cfg.unlearn.fisher_mode == FisherMode::Empirical ? "empirical" : "model"},
        {"fisher_form", cfg.unlearn.fisher_form == FisherForm::Diagonal ? "diagonal" : "full"},
        {"optimizer", cfg.unlearn.optimizer == UnlearnOptimizer::PlainGd ? "gd" : "adam"},
        {"batch_size", cfg.unlearn.batch_size},
        {"forget_class", cfg.forget_class}};
    j["mia"] = {{"attacker_split_fraction", cfg.mia.attacker_split_fraction},
                {"balance", cfg.mia.balance}};
    j["seeds"] = cfg.seeds;
    j["output_dir"] = cfg.output_dir;
    j["variants"] = cfg.variants;
    if (!cfg.ablate_alphas.empty()) j["ablate"] = {{"alphas", cfg.ablate_alphas}};
    return j;
}

ordered_json report_to_json(const MetricsReport& r) {
    return ordered_json{{"variant", r.variant},
                        {"dataset", r.dataset},
                        {"a_df", r.a_df},
                        {"a_dr", r.a_dr},
                        {"mia_accuracy", r.mia_accuracy},
                        {"unlearn_steps", r.unlearn_steps},
                        {"unlearn_epochs", r.unlearn_epochs},
                        {"wall_time_seconds", r.wall_time_seconds},
                        {"seed", r.seed}};
}

MetricsReport report_from_json(const json& j) {
    MetricsReport r;
    r.variant = j.at("variant").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.a_df = j.at("a_df").get<double>();
    r.a_dr = j.at("a_dr").get<double>();
    r.mia_accuracy = j.at("mia_accuracy").get<double>();
    r.unlearn_steps = j.at("unlearn_steps").get<int>();
    r.unlearn_epochs = j.at("unlearn_epochs").get<double>();
    r.wall_time_seconds = j.at("wall_time_seconds").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.validate();
    return r;
}

ordered_json table_to_json(const ComparisonTable& table) {
    ordered_json rows = ordered_json::array();
    for (const VariantSummary& r : table.rows)
        rows.push_back(ordered_json{{"variant", r.variant},
                                    {"A_Df_mean", r.a_df_mean},
                                    {"A_Df_std", r.a_df_std},
                                    {"A_Dr_mean", r.a_dr_mean},
                                    {"A_Dr_std", r.a_dr_std},
                                    {"mia", r.mia_mean},
                                    {"steps", r.steps_mean},
                                    {"epochs", r.epochs_mean},
                                    {"wall_time_s", r.wall_time_mean},
                                    {"runs", r.runs}});
    return ordered_json{{"dataset", table.dataset}, {"rows", rows}};
}

std::pair<Dataset, Dataset> make_datasets(const DatasetSection& ds) {
    ds.validate();
    if (ds.kind == "csv") {
        Dataset raw_train = load_csv(ds.train_csv);
        Dataset raw_test = load_csv(ds.test_csv);
        auto adopt = [&](const Dataset& raw, const std::string& path) {
            if (raw.dim() != ds.d) {
                std::ostringstream os;
                os << path << ": file has d=" << raw.dim() << ", config declares d=" << ds.d;
                throw ParseError(os.str());
            }
            Dataset out(ds.d, ds.classes);
            for (std::size_t i = 0; i < raw.size(); ++i) {
                if (raw[i].y >= ds.classes) {
                    std::ostringstream os;
                    os << path << ":" << i + 2 << ": label " << raw[i].y
                       << " >= declared classes " << ds.classes;
                    throw ParseError(os.str());
                }
                out.add(raw[i].x, raw[i].y);
            }
            return out;
        };
        return {adopt(raw_train, ds.train_csv), adopt(raw_test, ds.test_csv)};
    }

    const std::size_t per_class = ds.n_train_per_class + ds.n_test_per_class;
    const Dataset all = ds.kind == "blobs"
                            ? gen_blobs(ds.d, ds.classes, per_class, ds.blob_spread, ds.seed)
                            : gen_rings(ds.classes, per_class, ds.ring_noise, ds.seed);
    Dataset train(all.dim(), ds.classes);
    Dataset test(all.dim(), ds.classes);
    for (int c = 0; c < ds.classes; ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * per_class;
        for (std::size_t i = 0; i < ds.n_train_per_class; ++i)
            train.add(all[base + i].x, all[base + i].y);
        for (std::size_t i = ds.n_train_per_class; i < per_class; ++i)
            test.add(all[base + i].x, all[base + i].y);
    }
    return {std::move(train), std::move(test)};
}

PreparedExperiment prepare_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    PreparedExperiment prep;
    prep.spec = cfg.model_spec();
    prep.dataset_id = cfg.dataset.identity();
    std::tie(prep.train_data, prep.test_data) = make_datasets(cfg.dataset);
    std::tie(prep.sn_train, prep.sp_train) = prep.train_data.split_by_class(cfg.forget_class);
    prep.sn_test = prep.test_data.split_by_class(cfg.forget_class).first;
    if (prep.sn_train.empty())
        throw ContractError("experiment: no forget-class examples in the training data");
    if (prep.sp_train.empty())
        throw ContractError("experiment: no retain-class examples in the training data");
    if (prep.sn_test.empty())
        throw ContractError("experiment: no forget-class examples in the test data");

    prep.seeds = cfg.seeds;
    for (std::uint64_t seed : cfg.seeds) {
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        prep.initials.push_back(train(prep.spec, prep.train_data, tc));
        prep.initial_wall_times.push_back(wall_seconds_since(t0));
    }
    return prep;
}

MetricsReport evaluate_variant(const PreparedExperiment& prep, const ExperimentConfig& cfg,
                               const std::string& variant, const ParamVector& theta,
                               std::uint64_t seed, int unlearn_steps, double unlearn_epochs,
                               double wall_time_seconds) {
    MetricsReport r;
    r.variant = variant;
    r.dataset = prep.dataset_id;
    std::tie(r.a_df, r.a_dr) =
        class_split_accuracy(prep.spec, theta, prep.test_data, cfg.forget_class);
    MiaConfig mc = cfg.mia;
    mc.seed = seed;
    r.mia_accuracy = mia_accuracy(prep.spec, theta, prep.sn_train, prep.sn_test, mc);
    r.unlearn_steps = unlearn_steps;
    r.unlearn_epochs = unlearn_epochs;
    r.wall_time_seconds = wall_time_seconds;
    r.seed = seed;
    r.validate();
    return r;
}

ordered_json unlearn_result_to_json(const UnlearnResult& res) {
    return ordered_json{
        {"steps_run", res.steps_run},
        {"epochs", res.epochs},
        {"wall_time_seconds", res.wall_time_seconds},
        {"counters",
         {{"retain_examples_touched", res.counters.retain_examples_touched},
          {"fisher_computations", res.counters.fisher_computations},
          {"optimization_phases", res.counters.optimization_phases}}},
        {"loss_trace", res.loss_trace}};
}

namespace {

void finalize_record(RunRecord& rec, const fs::path& outdir) {
    if (!rec.reports.empty()) {
        rec.table = compare_report(rec.reports);
        write_text(outdir / "comparison.csv", to_csv(rec.table));
        write_json(outdir / "comparison.json", table_to_json(rec.table));
        rec.artifact_paths.push_back((outdir / "comparison.csv").string());
        rec.artifact_paths.push_back((outdir / "comparison.json").string());
    }

    ordered_json reports = ordered_json::array();
    for (const MetricsReport& r : rec.reports) reports.push_back(report_to_json(r));
    // artifact paths recorded relative to the output dir, so records stay
    // valid (and byte-comparable) when the tree moves
    ordered_json artifacts = ordered_json::array();
    for (const std::string& p : rec.artifact_paths)
        artifacts.push_back(fs::relative(p, outdir).string());
    const ordered_json record{{"config", rec.config_snapshot},
                              {"reports", reports},
                              {"failures", rec.failures},
                              {"artifacts", artifacts}};
    write_json(outdir / "run_record.json", record);
    rec.artifact_paths.push_back((outdir / "run_record.json").string());

    for (const std::string& p : rec.artifact_paths)
        if (!fs::exists(p)) throw ContractError("run record references missing artifact " + p);
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path outdir(cfg.output_dir);
    fs::create_directories(outdir);

    RunRecord rec;
    rec.config_snapshot = config_to_json(cfg);
    write_json(outdir / "config_snapshot.json", rec.config_snapshot);
    rec.artifact_paths.push_back((outdir / "config_snapshot.json").string());

    const PreparedExperiment prep = prepare_experiment(cfg);

    for (std::size_t si = 0; si < prep.seeds.size(); ++si) {
        const std::uint64_t seed = prep.seeds[si];
        try {
            const fs::path sdir = outdir / ("seed_" + std::to_string(seed));
            fs::create_directories(sdir);
            const Checkpoint& initial = prep.initials[si];
            std::vector<MetricsReport> seed_reports;
            std::vector<std::string> seed_artifacts;

            for (const std::string& variant : cfg.variants) {
                MetricsReport report;
                if (variant == "initial") {
                    const fs::path p = sdir / "initial.ckpt";
                    save_checkpoint(initial, p.string());
                    seed_artifacts.push_back(p.string());
                    report = evaluate_variant(prep, cfg, "initial", initial.theta, seed, 0, 0.0,
                                              prep.initial_wall_times[si]);
                } else if (variant == "retrain") {
                    TrainConfig tc = cfg.train;
                    tc.seed = seed ^ kRetrainSalt;
                    const auto t0 = std::chrono::steady_clock::now();
                    const Checkpoint ckpt =
                        retrain_baseline(prep.spec, prep.sp_train, cfg.forget_class, tc);
                    const double wall = wall_seconds_since(t0);
                    const fs::path p = sdir / "retrain.ckpt";
                    save_checkpoint(ckpt, p.string());
                    seed_artifacts.push_back(p.string());
                    const std::size_t batches =
                        (prep.sp_train.size() + tc.batch_size - 1) / tc.batch_size;
                    report = evaluate_variant(prep, cfg, "retrain", ckpt.theta, seed,
                                              static_cast<int>(batches) * tc.epochs,
                                              static_cast<double>(tc.epochs), wall);
                } else if (variant == "finetune") {
                    TrainConfig ftc = cfg.finetune_config();
                    ftc.seed = seed ^ kFinetuneSalt;
                    const auto t0 = std::chrono::steady_clock::now();
                    const Checkpoint ckpt =
                        finetune_baseline(initial, prep.sp_train, cfg.forget_class, ftc);
                    const double wall = wall_seconds_since(t0);
                    const fs::path p = sdir / "finetune.ckpt";
                    save_checkpoint(ckpt, p.string());
                    seed_artifacts.push_back(p.string());
                    const std::size_t batches =
                        (prep.sp_train.size() + ftc.batch_size - 1) / ftc.batch_size;
                    report = evaluate_variant(prep, cfg, "finetune", ckpt.theta, seed,
                                              static_cast<int>(batches) * ftc.epochs,
                                              static_cast<double>(ftc.epochs), wall);
                } else {  // pbu
                    PBUConfig ucfg = cfg.unlearn;
                    ucfg.seed = seed;
                    const UnlearnResult res = run_pbu(prep.spec, initial, prep.sn_train, ucfg);
                    if (res.counters.retain_examples_touched != 0)
                        throw ContractError("blindness audit failed: PBU touched retain data");

                    Checkpoint ckpt{prep.spec, res.theta_u,
                                    {seed, static_cast<int>(std::lround(res.epochs)),
                                     res.loss_trace.empty() ? 0.0 : res.loss_trace.back()}};
                    const fs::path p = sdir / "pbu.ckpt";
                    save_checkpoint(ckpt, p.string());
                    seed_artifacts.push_back(p.string());
                    if (res.fisher && res.fisher->form() == FisherForm::Diagonal) {
                        const fs::path fp = sdir / "pbu.fisher";
                        save_fisher(*res.fisher, fp.string());
                        seed_artifacts.push_back(fp.string());
                    }
                    const fs::path rp = sdir / "pbu_run.json";
                    write_json(rp, unlearn_result_to_json(res));
                    seed_artifacts.push_back(rp.string());
                    report = evaluate_variant(prep, cfg, "pbu", res.theta_u, seed, res.steps_run,
                                              res.epochs, res.wall_time_seconds);
                }

                const fs::path rp = sdir / ("report_" + variant + ".json");
                write_json(rp, report_to_json(report));
                seed_artifacts.push_back(rp.string());
                seed_reports.push_back(std::move(report));
            }

            rec.reports.insert(rec.reports.end(), seed_reports.begin(), seed_reports.end());
            rec.artifact_paths.insert(rec.artifact_paths.end(), seed_artifacts.begin(),
                                      seed_artifacts.end());
        } catch (const Error& e) {
            rec.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
        }
    }

    finalize_record(rec, outdir);
    return rec;
}

double median(std::vector<double> values) {
    if (values.empty()) throw ContractError("median of empty list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

RunRecord ablate_regularizer(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path outdir(cfg.output_dir);
    fs::create_directories(outdir);

    RunRecord rec;
    rec.config_snapshot = config_to_json(cfg);
    write_json(outdir / "config_snapshot.json", rec.config_snapshot);
    rec.artifact_paths.push_back((outdir / "config_snapshot.json").string());

    const PreparedExperiment prep = prepare_experiment(cfg);

    PBUConfig noreg = cfg.unlearn;
    noreg.beta = 0.0;
    noreg.gamma = 0.0;

    std::vector<double> full_adf, full_adr, bare_adf, bare_adr;
    for (std::size_t si = 0; si < prep.seeds.size(); ++si) {
        const std::uint64_t seed = prep.seeds[si];
        try {
            const fs::path sdir = outdir / ("seed_" + std::to_string(seed));
            fs::create_directories(sdir);
            for (const bool regularized : {true, false}) {
                PBUConfig ucfg = regularized ? cfg.unlearn : noreg;
                ucfg.seed = seed;
                const UnlearnResult res = run_pbu(prep.spec, prep.initials[si], prep.sn_train, ucfg);
                const std::string name = regularized ? "pbu" : "pbu_unregularized";
                MetricsReport report = evaluate_variant(prep, cfg, name, res.theta_u, seed,
                                                        res.steps_run, res.epochs,
                                                        res.wall_time_seconds);
                (regularized ? full_adf : bare_adf).push_back(report.a_df);
                (regularized ? full_adr : bare_adr).push_back(report.a_dr);
                const fs::path rp = sdir / ("report_" + name + ".json");
                write_json(rp, report_to_json(report));
                rec.artifact_paths.push_back(rp.string());
                rec.reports.push_back(std::move(report));
            }
        } catch (const Error& e) {
            rec.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
        }
    }

    if (!full_adf.empty() && !bare_adf.empty()) {
        const double full_adf_med = median(full_adf), bare_adf_med = median(bare_adf);
        const double full_adr_med = median(full_adr), bare_adr_med = median(bare_adr);
        const ordered_json summary{
            {"regularized", {{"a_df_median", full_adf_med}, {"a_dr_median", full_adr_med}}},
            {"unregularized", {{"a_df_median", bare_adf_med}, {"a_dr_median", bare_adr_med}}},
            {"a_dr_gap", full_adr_med - bare_adr_med},
            {"a_df_matched", full_adf_med <= 0.05 && bare_adf_med <= 0.05}};
        write_json(outdir / "ablation.json", summary);
        rec.artifact_paths.push_back((outdir / "ablation.json").string());
    }

    finalize_record(rec, outdir);
    return rec;
}

RunRecord sweep_alpha(const ExperimentConfig& cfg, const std::vector<double>& alphas) {
    cfg.validate();
    if (alphas.empty()) throw ContractError("sweep_alpha: alphas must be nonempty");
    for (std::size_t i = 1; i < alphas.size(); ++i)
        if (alphas[i] <= alphas[i - 1]) throw ContractError("sweep_alpha: alphas must ascend");

    const fs::path outdir(cfg.output_dir);
    fs::create_directories(outdir);

    RunRecord rec;
    rec.config_snapshot = config_to_json(cfg);
    write_json(outdir / "config_snapshot.json", rec.config_snapshot);
    rec.artifact_paths.push_back((outdir / "config_snapshot.json").string());

    const PreparedExperiment prep = prepare_experiment(cfg);

    ordered_json sweep_rows = ordered_json::array();
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        std::vector<double> adf, adr;
        const std::string name = "alpha_" + std::to_string(ai);
        for (std::size_t si = 0; si < prep.seeds.size(); ++si) {
            const std::uint64_t seed = prep.seeds[si];
            try {
                PBUConfig ucfg = cfg.unlearn;
                ucfg.alpha = alphas[ai];
                ucfg.seed = seed;
                const UnlearnResult res = run_pbu(prep.spec, prep.initials[si], prep.sn_train, ucfg);
                MetricsReport report = evaluate_variant(prep, cfg, name, res.theta_u, seed,
                                                        res.steps_run, res.epochs,
                                                        res.wall_time_seconds);
                adf.push_back(report.a_df);
                adr.push_back(report.a_dr);
                const fs::path sdir = outdir / ("seed_" + std::to_string(seed));
                fs::create_directories(sdir);
                const fs::path rp = sdir / ("report_" + name + ".json");
                write_json(rp, report_to_json(report));
                rec.artifact_paths.push_back(rp.string());
                rec.reports.push_back(std::move(report));
            } catch (const Error& e) {
                rec.failures.push_back("alpha " + std::to_string(alphas[ai]) + " seed " +
                                       std::to_string(seed) + ": " + e.what());
            }
        }
        if (!adf.empty())
            sweep_rows.push_back(ordered_json{{"alpha", alphas[ai]},
                                              {"a_df_median", median(adf)},
                                              {"a_dr_median", median(adr)}});
    }

    write_json(outdir / "sweep.json", ordered_json{{"rows", sweep_rows}});
    rec.artifact_paths.push_back((outdir / "sweep.json").string());
    finalize_record(rec, outdir);
    return rec;
}

TuneOutcome tune_pbu(const ExperimentConfig& cfg, const TuneGrid& grid) {
    cfg.validate();
    if (grid.alphas.empty() || grid.betas.empty() || grid.gammas.empty())
        throw ContractError("tune_pbu: grid axes must be nonempty");

    const PreparedExperiment prep = prepare_experiment(cfg);

    // feasible first, then median A_Dr; near ties resolved toward larger
    // alpha, then stronger regularization (more stability margin)
    auto better = [](const TuneOutcome& a, const TuneOutcome& b) {
        if (a.feasible != b.feasible) return a.feasible;
        if (!a.feasible) return a.a_df_median < b.a_df_median;
        if (std::abs(a.a_dr_median - b.a_dr_median) > 0.01) return a.a_dr_median > b.a_dr_median;
        if (a.alpha != b.alpha) return a.alpha > b.alpha;
        if (a.gamma != b.gamma) return a.gamma > b.gamma;
        return a.beta > b.beta;
    };

    TuneOutcome best;
    bool have_best = false;
    for (double gamma : grid.gammas)
        for (double beta : grid.betas)
            for (double alpha : grid.alphas) {
                std::vector<double> adf, adr;
                bool failed = false;
                for (std::size_t si = 0; si < prep.seeds.size() && !failed; ++si) {
                    PBUConfig ucfg = cfg.unlearn;
                    ucfg.alpha = alpha;
                    ucfg.beta = beta;
                    ucfg.gamma = gamma;
                    ucfg.seed = prep.seeds[si];
                    try {
                        const UnlearnResult res =
                            run_pbu(prep.spec, prep.initials[si], prep.sn_train, ucfg);
                        const auto [a_df, a_dr] = class_split_accuracy(
                            prep.spec, res.theta_u, prep.test_data, cfg.forget_class);
                        adf.push_back(a_df);
                        adr.push_back(a_dr);
                    } catch (const DivergenceError&) {
                        failed = true;  // diverging combos drop out of the grid
                    }
                }
                if (failed || adf.empty()) continue;
                TuneOutcome cand;
                cand.alpha = alpha;
                cand.beta = beta;
                cand.gamma = gamma;
                cand.a_df_median = median(adf);
                cand.a_dr_median = median(adr);
                cand.feasible = cand.a_df_median <= 0.05;
                if (!have_best || better(cand, best)) {
                    best = cand;
                    have_best = true;
                }
            }
    if (!have_best) throw ContractError("tune_pbu: every grid combination diverged");
    return best;
}

}  // namespace pbu
