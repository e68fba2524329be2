// Command-line front end: data generation, training, unlearning, evaluation
// and full experiment runs. Exit codes: 0 success, 1 contract/parse errors,
// 2 numerical divergence.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pbu/datagen.hpp"
#include "pbu/errors.hpp"
#include "pbu/experiment.hpp"
#include "pbu/fisher.hpp"
#include "pbu/metrics.hpp"
#include "pbu/unlearn.hpp"

namespace {

using namespace pbu;
namespace fs = std::filesystem;

void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

int cmd_gen_data(const std::string& kind, const std::string& out, std::uint64_t seed,
                 std::size_t d, int classes, std::size_t n_per_class, double spread,
                 double noise) {
    const Dataset data = kind == "blobs" ? gen_blobs(d, classes, n_per_class, spread, seed)
                                         : gen_rings(classes, n_per_class, noise, seed);
    save_csv(data, out);
    std::printf("wrote %zu examples (%d classes, d=%zu) to %s\n", data.size(), data.num_classes(),
                data.dim(), out.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out) {
    const ExperimentConfig cfg = load_config_file(config_path);
    const auto [train_data, test_data] = make_datasets(cfg.dataset);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seeds.front();
    const Checkpoint ckpt = train(cfg.model_spec(), train_data, tc);
    save_checkpoint(ckpt, out);
    std::printf("trained: train acc %.4f, test acc %.4f, final loss %.6f -> %s\n",
                accuracy(ckpt.spec, ckpt.theta, train_data),
                accuracy(ckpt.spec, ckpt.theta, test_data), ckpt.meta.final_loss, out.c_str());
    return 0;
}

int cmd_unlearn(const std::string& config_path, const std::string& ckpt_path,
                const std::string& out, const std::string& report_path) {
    const ExperimentConfig cfg = load_config_file(config_path);
    const Checkpoint initial = load_checkpoint(ckpt_path);
    if (!(initial.spec == cfg.model_spec()))
        throw ContractError("checkpoint spec does not match the config model");

    const auto [train_data, test_data] = make_datasets(cfg.dataset);
    const Dataset sn = train_data.split_by_class(cfg.forget_class).first;
    PBUConfig ucfg = cfg.unlearn;
    ucfg.seed = cfg.seeds.front();
    const UnlearnResult res = run_pbu(cfg.model_spec(), initial, sn, ucfg);

    Checkpoint unlearned{cfg.model_spec(), res.theta_u,
                         {ucfg.seed, static_cast<int>(std::lround(res.epochs)),
                          res.loss_trace.empty() ? 0.0 : res.loss_trace.back()}};
    save_checkpoint(unlearned, out);
    if (res.fisher && res.fisher->form() == FisherForm::Diagonal)
        save_fisher(*res.fisher, out + ".fisher");
    if (!report_path.empty()) write_json_file(report_path, unlearn_result_to_json(res));
    std::printf("unlearned class %d in %d steps (%.2f epochs, %.3fs) -> %s\n", cfg.forget_class,
                res.steps_run, res.epochs, res.wall_time_seconds, out.c_str());
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& report_path) {
    const ExperimentConfig cfg = load_config_file(config_path);
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!(ckpt.spec == cfg.model_spec()))
        throw ContractError("checkpoint spec does not match the config model");

    PreparedExperiment prep;
    prep.spec = cfg.model_spec();
    prep.dataset_id = cfg.dataset.identity();
    std::tie(prep.train_data, prep.test_data) = make_datasets(cfg.dataset);
    std::tie(prep.sn_train, prep.sp_train) = prep.train_data.split_by_class(cfg.forget_class);
    prep.sn_test = prep.test_data.split_by_class(cfg.forget_class).first;

    const MetricsReport report = evaluate_variant(prep, cfg, "eval", ckpt.theta,
                                                  cfg.seeds.front(), 0, 0.0, 0.0);
    if (!report_path.empty()) write_json_file(report_path, report_to_json(report));
    std::printf("A_Df %.4f  A_Dr %.4f  MIA %.4f\n", report.a_df, report.a_dr,
                report.mia_accuracy);
    return 0;
}

int finish_run(const RunRecord& rec, const std::string& outdir) {
    for (const std::string& f : rec.failures) std::fprintf(stderr, "failure: %s\n", f.c_str());
    if (!rec.reports.empty()) std::fputs(to_csv(rec.table).c_str(), stdout);
    std::printf("artifacts under %s\n", outdir.c_str());
    return rec.reports.empty() ? 1 : 0;
}

int cmd_run(const std::string& config_path, const std::string& outdir) {
    ExperimentConfig cfg = load_config_file(config_path);
    if (!outdir.empty()) cfg.output_dir = outdir;
    return finish_run(run_experiment(cfg), cfg.output_dir);
}

int cmd_ablate(const std::string& config_path, const std::string& mode,
               const std::string& outdir) {
    ExperimentConfig cfg = load_config_file(config_path);
    if (!outdir.empty()) cfg.output_dir = outdir;
    if (mode == "regularizer") return finish_run(ablate_regularizer(cfg), cfg.output_dir);

    std::vector<double> alphas = cfg.ablate_alphas;
    if (alphas.empty())
        alphas = {cfg.unlearn.alpha / 8.0, cfg.unlearn.alpha / 4.0, cfg.unlearn.alpha / 2.0,
                  cfg.unlearn.alpha};
    return finish_run(sweep_alpha(cfg, alphas), cfg.output_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partially Blinded Unlearning: train, unlearn, evaluate"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_kind = "blobs", gd_out;
    std::uint64_t gd_seed = 0;
    std::size_t gd_d = 16, gd_n = 500;
    int gd_classes = 4;
    double gd_spread = 1.0, gd_noise = 0.1;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset as CSV");
    gen->add_option("--kind", gd_kind)->check(CLI::IsMember({"blobs", "rings"}));
    gen->add_option("--out", gd_out)->required();
    gen->add_option("--seed", gd_seed);
    gen->add_option("--d", gd_d);
    gen->add_option("--classes", gd_classes);
    gen->add_option("--n-per-class", gd_n);
    gen->add_option("--spread", gd_spread);
    gen->add_option("--noise", gd_noise);

    // train
    std::string tr_config, tr_out;
    auto* tr = app.add_subcommand("train", "train the initial model from a config");
    tr->add_option("--config", tr_config)->required();
    tr->add_option("--out", tr_out)->required();

    // unlearn
    std::string ul_config, ul_ckpt, ul_out, ul_report;
    auto* ul = app.add_subcommand("unlearn", "run PBU on a trained checkpoint");
    ul->add_option("--config", ul_config)->required();
    ul->add_option("--ckpt", ul_ckpt)->required();
    ul->add_option("--out", ul_out)->required();
    ul->add_option("--report", ul_report);

    // eval
    std::string ev_config, ev_ckpt, ev_report;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (A_Df, A_Dr, MIA)");
    ev->add_option("--config", ev_config)->required();
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--report", ev_report);

    // run
    std::string run_config, run_outdir;
    auto* rn = app.add_subcommand("run", "full train/retrain/finetune/pbu pipeline");
    rn->add_option("--config", run_config)->required();
    rn->add_option("--out-dir", run_outdir);

    // ablate
    std::string ab_config, ab_mode = "regularizer", ab_outdir;
    auto* ab = app.add_subcommand("ablate", "regularizer ablation or alpha sweep");
    ab->add_option("--config", ab_config)->required();
    ab->add_option("--mode", ab_mode)->check(CLI::IsMember({"regularizer", "alpha"}));
    ab->add_option("--out-dir", ab_outdir);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(gd_kind, gd_out, gd_seed, gd_d, gd_classes, gd_n, gd_spread,
                                gd_noise);
        if (tr->parsed()) return cmd_train(tr_config, tr_out);
        if (ul->parsed()) return cmd_unlearn(ul_config, ul_ckpt, ul_out, ul_report);
        if (ev->parsed()) return cmd_eval(ev_config, ev_ckpt, ev_report);
        if (rn->parsed()) return cmd_run(run_config, run_outdir);
        if (ab->parsed()) return cmd_ablate(ab_config, ab_mode, ab_outdir);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
