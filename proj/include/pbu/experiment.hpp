#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbu/checkpoint.hpp"
#include "pbu/dataset.hpp"
#include "pbu/metrics.hpp"
#include "pbu/train.hpp"
#include "pbu/unlearn.hpp"

namespace pbu {

struct DatasetSection {
    std::string kind = "blobs";  // blobs | rings | csv
    std::size_t d = 16;
    int classes = 4;
    std::size_t n_train_per_class = 500;
    std::size_t n_test_per_class = 200;
    double blob_spread = 1.0;
    double ring_noise = 0.1;
    std::uint64_t seed = 0;
    std::string train_csv, test_csv;  // kind == csv

    std::string identity() const;  // stable id shared by all reports of a run
    void validate() const;
};

struct ExperimentConfig {
    // defaults are the desk problem: blobs d=16/C=4, MLP [32], Adam 200 epochs
    // for training; the unlearning defaults come from the harness grid search
    // on that problem (Adam variant, full batch over S_n)
    ExperimentConfig() {
        train.epochs = 200;
        unlearn.alpha = 5.0;
        unlearn.beta = 10.0;
        unlearn.gamma = 100.0;
        unlearn.eta = 2e-3;
        unlearn.steps = 150;
        unlearn.optimizer = UnlearnOptimizer::Adam;
    }

    DatasetSection dataset;
    std::vector<std::size_t> hidden_dims = {32};
    TrainConfig train;
    std::optional<TrainConfig> finetune;  // defaults to the train section
    PBUConfig unlearn;
    int forget_class = 0;
    MiaConfig mia;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string output_dir = "pbu_out";
    std::vector<std::string> variants = {"initial", "retrain", "finetune", "pbu"};
    std::vector<double> ablate_alphas;  // alpha sweep grid; empty = geometric default

    ModelSpec model_spec() const;
    TrainConfig finetune_config() const;
    void validate() const;
};

/// Strict parser: unknown keys anywhere are a hard error.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::string& path);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

nlohmann::ordered_json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
nlohmann::ordered_json table_to_json(const ComparisonTable& table);
nlohmann::ordered_json unlearn_result_to_json(const UnlearnResult& res);

/// Train/test data for the configured dataset. Generated kinds draw
/// train-then-test per class from one seeded stream; csv kind loads and
/// validates against the declared dimensions.
std::pair<Dataset, Dataset> make_datasets(const DatasetSection& ds);

/// Shared per-run artifacts: data, class splits, and one trained initial
/// model per seed.
struct PreparedExperiment {
    ModelSpec spec;
    std::string dataset_id;
    Dataset train_data, test_data;
    Dataset sn_train, sp_train;  // forget/retain split of the training data
    Dataset sn_test;             // forget-class test examples (MIA nonmembers)
    std::vector<std::uint64_t> seeds;
    std::vector<Checkpoint> initials;        // per seed
    std::vector<double> initial_wall_times;  // per seed
};

PreparedExperiment prepare_experiment(const ExperimentConfig& cfg);

/// A_Df/A_Dr on the test split plus the MIA score for one parameter vector.
MetricsReport evaluate_variant(const PreparedExperiment& prep, const ExperimentConfig& cfg,
                               const std::string& variant, const ParamVector& theta,
                               std::uint64_t seed, int unlearn_steps, double unlearn_epochs,
                               double wall_time_seconds);

struct RunRecord {
    nlohmann::ordered_json config_snapshot;
    std::vector<MetricsReport> reports;
    ComparisonTable table;
    std::vector<std::string> artifact_paths;
    std::vector<std::string> failures;  // per-seed failure notes, empty on full success
};

/// Full pipeline per seed: initial -> {retrain, finetune, pbu} -> metrics.
/// Writes checkpoints, fisher files, per-variant JSON reports, comparison
/// CSV/JSON and a run record under cfg.output_dir. A failing seed is
/// recorded and the remaining seeds continue.
RunRecord run_experiment(const ExperimentConfig& cfg);

/// Table-3-style ablation: tuned (alpha,beta,gamma) vs (alpha,0,0).
RunRecord ablate_regularizer(const ExperimentConfig& cfg);

/// Table-4-style sweep: one PBU run per alpha per seed at fixed beta/gamma;
/// reports per-alpha medians.
RunRecord sweep_alpha(const ExperimentConfig& cfg, const std::vector<double>& alphas);

struct TuneGrid {
    std::vector<double> alphas, betas, gammas;
};

struct TuneOutcome {
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
    double a_df_median = 1.0, a_dr_median = 0.0;
    bool feasible = false;  // median A_Df <= 0.05 reached
};

/// Grid search over (alpha, beta, gamma), scoring by the median over
/// cfg.seeds: feasible means median A_Df <= 0.05; among feasible picks the
/// best median A_Dr, preferring larger alpha on near ties.
TuneOutcome tune_pbu(const ExperimentConfig& cfg, const TuneGrid& grid);

double median(std::vector<double> values);

}  // namespace pbu
