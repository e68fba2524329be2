#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pbu/dataset.hpp"
#include "pbu/model.hpp"

namespace pbu {

/// Metrics of one model variant on one dataset/seed.
struct MetricsReport {
    std::string variant;
    std::string dataset;
    double a_df = 0.0;          // forget-class test accuracy
    double a_dr = 0.0;          // retain-classes test accuracy
    double mia_accuracy = 0.0;  // membership-inference attack accuracy
    int unlearn_steps = 0;
    double unlearn_epochs = 0.0;
    double wall_time_seconds = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// (A_Df, A_Dr): accuracy over {y == forget_class} and its complement.
/// Contract error if either partition is empty.
std::pair<double, double> class_split_accuracy(const ModelSpec& spec, const ParamVector& theta,
                                               const Dataset& test, int forget_class);

struct MiaConfig {
    double attacker_split_fraction = 0.7;
    std::uint64_t seed = 0;
    bool balance = true;  // subsample the larger side to equal counts

    void validate() const;
};

/// Loss-threshold membership inference. Feature = per-example cross-entropy
/// under theta; balanced sides, rank-stratified attacker split, threshold
/// and direction picked on attacker-train, accuracy reported on
/// attacker-test.
double mia_accuracy(const ModelSpec& spec, const ParamVector& theta, const Dataset& members,
                    const Dataset& nonmembers, const MiaConfig& cfg);

/// Same attack on precomputed 1-D features (exposed for testing the
/// threshold machinery directly).
double mia_accuracy_from_losses(std::vector<double> member_losses,
                                std::vector<double> nonmember_losses, const MiaConfig& cfg);

struct VariantSummary {
    std::string variant;
    double a_df_mean = 0.0, a_df_std = 0.0;
    double a_dr_mean = 0.0, a_dr_std = 0.0;
    double mia_mean = 0.0;
    double steps_mean = 0.0;
    double epochs_mean = 0.0;
    double wall_time_mean = 0.0;
    std::size_t runs = 0;
};

struct ComparisonTable {
    std::string dataset;
    std::vector<VariantSummary> rows;
};

/// Aggregate per-variant mean +/- std (denominator n-1; 0 for a single run).
/// All reports must share the same dataset identity.
ComparisonTable compare_report(const std::vector<MetricsReport>& reports);

/// Header: variant,A_Df_mean,A_Df_std,A_Dr_mean,A_Dr_std,mia,steps,epochs,wall_time_s
std::string to_csv(const ComparisonTable& table);

}  // namespace pbu
