#include "pbu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pbu/errors.hpp"
#include "pbu/kernels.hpp"
#include "pbu/parallel.hpp"
#include "pbu/rng.hpp"

namespace pbu {

void MetricsReport::validate() const {
    auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    if (!in_unit(a_df) || !in_unit(a_dr) || !in_unit(mia_accuracy))
        throw ContractError("metrics report: accuracies must lie in [0,1]");
}

std::pair<double, double> class_split_accuracy(const ModelSpec& spec, const ParamVector& theta,
                                               const Dataset& test, int forget_class) {
    check_theta(spec, theta);
    if (forget_class < 0 || forget_class >= test.num_classes())
        throw ContractError("class_split_accuracy: forget class out of range");

    std::vector<unsigned char> pred_ok(test.size(), 0);
    par::for_index(test.size(), [&](std::size_t i) {
        pred_ok[i] = predict(spec, theta, test[i].x) == test[i].y ? 1 : 0;
    });

    std::size_t nf = 0, nr = 0, cf = 0, cr = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test[i].y == forget_class) {
            ++nf;
            cf += pred_ok[i];
        } else {
            ++nr;
            cr += pred_ok[i];
        }
    }
    if (nf == 0 || nr == 0)
        throw ContractError(
            "class_split_accuracy: test set must contain forget-class and retain-class examples");
    return {static_cast<double>(cf) / static_cast<double>(nf),
            static_cast<double>(cr) / static_cast<double>(nr)};
}

void MiaConfig::validate() const {
    if (!(attacker_split_fraction > 0.0) || !(attacker_split_fraction < 1.0))
        throw ContractError("mia config: attacker split fraction must lie in (0,1)");
}

namespace {

// Rank-stratified split: walk features in sorted order, sending every
// example to attacker-train when floor((i+1)f) advances. Identical feature
// multisets therefore produce identical train and test multisets on both
// sides, and the split is invariant to monotone feature transforms.
void stratified_split(const std::vector<double>& sorted_vals, double frac,
                      std::vector<double>& train, std::vector<double>& test) {
    for (std::size_t i = 0; i < sorted_vals.size(); ++i) {
        const auto before = static_cast<long long>(std::floor(static_cast<double>(i) * frac));
        const auto after = static_cast<long long>(std::floor(static_cast<double>(i + 1) * frac));
        (after > before ? train : test).push_back(sorted_vals[i]);
    }
}

struct Rule {
    double threshold = 0.0;
    bool member_below = true;  // predict member when feature < threshold
};

double rule_accuracy(const Rule& r, const std::vector<double>& members,
                     const std::vector<double>& nonmembers) {
    std::size_t correct = 0;
    for (double v : members)
        if ((v < r.threshold) == r.member_below) ++correct;
    for (double v : nonmembers)
        if ((v < r.threshold) != r.member_below) ++correct;
    return static_cast<double>(correct) / static_cast<double>(members.size() + nonmembers.size());
}

}  // namespace

double mia_accuracy_from_losses(std::vector<double> member_losses,
                                std::vector<double> nonmember_losses, const MiaConfig& cfg) {
    cfg.validate();
    if (member_losses.empty() || nonmember_losses.empty())
        throw ContractError("mia: both member and nonmember pools must be nonempty");

    if (cfg.balance && member_losses.size() != nonmember_losses.size()) {
        auto subsample = [&](std::vector<double>& v, std::size_t k) {
            std::vector<std::size_t> idx(v.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            Rng rng(cfg.seed);
            rng.shuffle(idx);
            std::vector<double> kept;
            kept.reserve(k);
            for (std::size_t i = 0; i < k; ++i) kept.push_back(v[idx[i]]);
            v = std::move(kept);
        };
        const std::size_t k = std::min(member_losses.size(), nonmember_losses.size());
        if (member_losses.size() > k) subsample(member_losses, k);
        if (nonmember_losses.size() > k) subsample(nonmember_losses, k);
    }

    if (member_losses.size() < 4 || nonmember_losses.size() < 4)
        throw ContractError("mia: need at least 4 examples per side for the threshold sweep");

    std::sort(member_losses.begin(), member_losses.end());
    std::sort(nonmember_losses.begin(), nonmember_losses.end());

    std::vector<double> m_train, m_test, n_train, n_test;
    stratified_split(member_losses, cfg.attacker_split_fraction, m_train, m_test);
    stratified_split(nonmember_losses, cfg.attacker_split_fraction, n_train, n_test);
    if (m_train.empty() || m_test.empty() || n_train.empty() || n_test.empty())
        throw ContractError("mia: attacker split produced an empty partition");

    // candidate thresholds: below everything, midpoints of consecutive
    // distinct train values, above everything
    std::vector<double> pool = m_train;
    pool.insert(pool.end(), n_train.begin(), n_train.end());
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    std::vector<double> candidates;
    candidates.push_back(pool.front() - 1.0);
    for (std::size_t i = 0; i + 1 < pool.size(); ++i)
        candidates.push_back(0.5 * (pool[i] + pool[i + 1]));
    candidates.push_back(pool.back() + 1.0);

    // deterministic sweep: ascending thresholds, member-below before
    // member-above; first maximizer wins
    Rule best;
    double best_acc = -1.0;
    for (double t : candidates) {
        for (bool below : {true, false}) {
            const Rule r{t, below};
            const double acc = rule_accuracy(r, m_train, n_train);
            if (acc > best_acc) {
                best_acc = acc;
                best = r;
            }
        }
    }
    return rule_accuracy(best, m_test, n_test);
}

double mia_accuracy(const ModelSpec& spec, const ParamVector& theta, const Dataset& members,
                    const Dataset& nonmembers, const MiaConfig& cfg) {
    if (members.empty() || nonmembers.empty())
        throw ContractError("mia: member and nonmember datasets must be nonempty");
    return mia_accuracy_from_losses(kernels::example_losses(spec, theta, members),
                                    kernels::example_losses(spec, theta, nonmembers), cfg);
}

ComparisonTable compare_report(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw ContractError("compare_report: no reports");
    ComparisonTable table;
    table.dataset = reports.front().dataset;
    for (const MetricsReport& r : reports) {
        r.validate();
        if (r.dataset != table.dataset)
            throw ContractError("compare_report: reports mix datasets (\"" + table.dataset +
                                "\" vs \"" + r.dataset + "\")");
    }

    std::vector<std::string> order;
    for (const MetricsReport& r : reports)
        if (std::find(order.begin(), order.end(), r.variant) == order.end())
            order.push_back(r.variant);

    auto mean_std = [](const std::vector<double>& v) {
        const double n = static_cast<double>(v.size());
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        if (v.size() < 2) return std::pair<double, double>{mean, 0.0};
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair<double, double>{mean, std::sqrt(ss / (n - 1.0))};
    };

    for (const std::string& name : order) {
        std::vector<double> adf, adr, mia, steps, epochs, wall;
        for (const MetricsReport& r : reports) {
            if (r.variant != name) continue;
            adf.push_back(r.a_df);
            adr.push_back(r.a_dr);
            mia.push_back(r.mia_accuracy);
            steps.push_back(static_cast<double>(r.unlearn_steps));
            epochs.push_back(r.unlearn_epochs);
            wall.push_back(r.wall_time_seconds);
        }
        VariantSummary row;
        row.variant = name;
        row.runs = adf.size();
        std::tie(row.a_df_mean, row.a_df_std) = mean_std(adf);
        std::tie(row.a_dr_mean, row.a_dr_std) = mean_std(adr);
        row.mia_mean = mean_std(mia).first;
        row.steps_mean = mean_std(steps).first;
        row.epochs_mean = mean_std(epochs).first;
        row.wall_time_mean = mean_std(wall).first;
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string to_csv(const ComparisonTable& table) {
    std::ostringstream os;
    os << "variant,A_Df_mean,A_Df_std,A_Dr_mean,A_Dr_std,mia,steps,epochs,wall_time_s\n";
    char buf[64];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf << sep;
    };
    for (const VariantSummary& r : table.rows) {
        os << r.variant << ",";
        put(r.a_df_mean, ',');
        put(r.a_df_std, ',');
        put(r.a_dr_mean, ',');
        put(r.a_dr_std, ',');
        put(r.mia_mean, ',');
        put(r.steps_mean, ',');
        put(r.epochs_mean, ',');
        put(r.wall_time_mean, '\n');
    }
    return os.str();
}

}  // namespace pbu
