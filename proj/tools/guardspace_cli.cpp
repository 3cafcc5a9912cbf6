// Command-line front end: decompose | train | ablate | sweep | verify.
// Exit codes: 0 success, 1 verification or ordering failure, 2 usage or
// contract error, 3 numerical failure.

#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "guardspace/guardspace.hpp"

namespace fs = std::filesystem;
using namespace guardspace;

namespace {

Settings resolve_settings(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
    Settings s;
    if (!config_path.empty()) s = load_settings(config_path);
    for (const std::string& kv : overrides) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw contract_error("--set expects key=value, got \"" + kv + "\"");
        apply_setting(s, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return s;
}

void ensure_out(const fs::path& dir) { fs::create_directories(dir); }

int run_decompose(const Settings& s, const fs::path& out) {
    ensure_out(out);
    ToyModel base = make_base_model(s.task);
    TaskData data = gen_synthetic(s.task, s.train.unsafe_ratio);
    auto batches = capture_activations(base, data.subspace, s.train.subspace_corpus_tag);
    for (std::size_t li = 0; li < base.layers.size(); ++li) {
        const Matrix& w = base.layers[li].original_w;
        auto dec = safety_decompose(w, compute_covariance(batches[li]), s.train.rho,
                                    s.train.tau, s.train.max_rounds);
        std::string stem = "layer" + std::to_string(li) + "_";
        save_tensor(out / (stem + "U.gstf"), dec.U);
        Matrix sigma(dec.S.size(), 1, dec.S);
        save_tensor(out / (stem + "S.gstf"), sigma);
        save_tensor(out / (stem + "Vhat.gstf"), dec.Vhat);
        save_tensor(out / (stem + "Creg.gstf"), dec.C_reg.c);
        save_tensor(out / (stem + "Cinv.gstf"), dec.C_inv);
        double residual = relative_frobenius_error(truncate_reconstruct(dec, 0), w);
        std::cout << "layer " << li << ": k=" << dec.S.size()
                  << " reconstruction_error=" << detail::fmt_double(residual) << "\n";
    }
    std::cout << "wrote factor tensors to " << out.string() << "\n";
    return 0;
}

int run_train(const Settings& s, const fs::path& out) {
    ensure_out(out);
    TaskData data = gen_synthetic(s.task, s.train.unsafe_ratio);
    ToyModel base = make_base_model(s.task);
    ToyModel model = prepare(base, s.train, data.subspace, data.calibration);
    RunReport report = train(model, s.train, data);
    save_report(out / "report.txt", report);
    detail::atomic_write(out / "report.csv", format_report_csv(report));
    save_checkpoint(out / "model.gscp", model);
    detail::atomic_write(out / "config.cfg", emit_settings(s));
    std::cout << "mode " << mode_name(s.train.mode) << ": final task_loss "
              << detail::fmt_double(report.task_loss.back()) << ", final harmful_drift "
              << detail::fmt_double(report.harmful_drift.back())
              << ", final calibration_drift "
              << detail::fmt_double(report.calibration_drift.back()) << "\n";
    std::cout << "wrote report.txt, report.csv, model.gscp, config.cfg to " << out.string()
              << "\n";
    return 0;
}

int run_ablate(const Settings& s, const fs::path& out) {
    ensure_out(out);
    TaskData data = gen_synthetic(s.task, s.train.unsafe_ratio);
    ToyModel base = make_base_model(s.task);
    AblationOutcome suite = ablation_suite(base, s.train, data);
    std::ostringstream summary;
    summary << "mode task_loss calibration_drift harmful_drift\n";
    for (const RunReport& r : suite.reports) {
        save_report(out / ("report_" + std::string(mode_name(r.config.mode)) + ".txt"), r);
        summary << mode_name(r.config.mode) << " " << detail::fmt_double(r.task_loss.back())
                << " " << detail::fmt_double(r.calibration_drift.back()) << " "
                << detail::fmt_double(r.harmful_drift.back()) << "\n";
    }
    summary << (suite.ordering_ok ? "ordering ok\n" : "ordering violated\n");
    for (const std::string& v : suite.violations) summary << "violation: " << v << "\n";
    detail::atomic_write(out / "summary.txt", summary.str());
    std::cout << summary.str();
    return suite.ordering_ok ? 0 : 1;
}

int run_sweep(const Settings& s, const fs::path& out, const std::string& sizes_csv) {
    ensure_out(out);
    TaskData data = gen_synthetic(s.task, s.train.unsafe_ratio);
    std::vector<std::size_t> sizes;
    if (sizes_csv.empty()) {
        // default: from no data to the whole projector corpus in four steps
        std::size_t n = data.calibration.cols();
        for (std::size_t k = 0; k <= 4; ++k) sizes.push_back(k * n / 4);
    } else {
        sizes = detail::parse_size_list(sizes_csv, "sizes");
    }
    ToyModel base = make_base_model(s.task);
    auto points = datasize_sweep(base, s.train, data, sizes);
    std::ostringstream csv;
    csv << "size,harmful_drift,task_loss\n";
    for (const SweepPoint& p : points)
        csv << p.size << "," << detail::fmt_double(p.drift) << ","
            << detail::fmt_double(p.task_metric) << "\n";
    detail::atomic_write(out / "sweep.csv", csv.str());
    std::cout << csv.str();
    std::cout << "wrote sweep.csv to " << out.string() << "\n";
    return 0;
}

// Checks the calibration-invariance property of a saved model: along the base
// model's activations of the regenerated projector corpus, adapter updates
// must not move any layer output. Random adapter perturbations confirm the
// property is structural rather than a fluke of the stored values.
int run_verify(const Settings& s, const fs::path& checkpoint_path, double perturb_scale) {
    ToyModel model = load_checkpoint(checkpoint_path);
    TaskData data = gen_synthetic(s.task, s.train.unsafe_ratio);
    ToyModel base;
    base.nonlinearity = model.nonlinearity;
    base.nonlinearity_deriv = model.nonlinearity_deriv;
    for (const GuardedLayer& l : model.layers) {
        AdapterPair zero{Matrix(l.original_w.rows(), 1), Matrix(1, l.original_w.cols()), 1};
        base.layers.push_back({l.original_w, zero, identity_projector(l.original_w.cols()),
                               Mode::lora_baseline, l.original_w});
    }
    auto batches = capture_activations(base, data.calibration, s.train.projector_corpus_tag);

    std::mt19937_64 rng(s.train.seed);
    std::uniform_real_distribution<double> noise(-1.0, 1.0);
    double worst = 0.0;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        GuardedLayer& l = model.layers[li];
        double residual = verify_invariance(l, batches[li]);
        GuardedLayer shaken = l;
        double mag_a = perturb_scale * std::max(l.adapters.A.max_abs(), 1e-3);
        double mag_b = perturb_scale * std::max(l.adapters.B.max_abs(), 1e-3);
        for (double& v : shaken.adapters.A.data()) v += mag_a * noise(rng);
        for (double& v : shaken.adapters.B.data()) v += mag_b * noise(rng);
        double perturbed = verify_invariance(shaken, batches[li]);
        double layer_worst = std::max(residual, perturbed);
        worst = std::max(worst, layer_worst);
        std::cout << "layer " << li << ": invariance_residual "
                  << detail::fmt_double(residual) << ", perturbed_residual "
                  << detail::fmt_double(perturbed) << "\n";
    }
    bool ok = worst <= 1e-8;
    std::cout << "verification " << (ok ? "passed" : "failed") << " (worst residual "
              << detail::fmt_double(worst) << ", threshold 1e-08)\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GuardSpace: safety-preserving low-rank adaptation on dense toy models"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, sizes_csv;
    std::string out_dir = ".";
    std::vector<std::string> overrides;
    double perturb_scale = 1.0;

    auto add_common = [&](CLI::App* cmd, bool wants_out) {
        cmd->add_option("-c,--config", config_path, "configuration file");
        cmd->add_option("-s,--set", overrides, "override a config key (key=value)");
        if (wants_out) cmd->add_option("-o,--out", out_dir, "output directory");
    };

    CLI::App* decompose =
        app.add_subcommand("decompose", "factor the base weights against the harmful corpus");
    add_common(decompose, true);
    CLI::App* train_cmd = app.add_subcommand("train", "prepare and train one configuration");
    add_common(train_cmd, true);
    CLI::App* ablate = app.add_subcommand("ablate", "run the four-mode ablation suite");
    add_common(ablate, true);
    CLI::App* sweep = app.add_subcommand("sweep", "projector-corpus size sensitivity");
    add_common(sweep, true);
    sweep->add_option("--sizes", sizes_csv, "comma-separated corpus sizes");
    CLI::App* verify = app.add_subcommand("verify", "check a checkpoint's invariance property");
    add_common(verify, false);
    verify->add_option("-k,--checkpoint", checkpoint_path, "checkpoint file")->required();
    verify->add_option("--perturb-scale", perturb_scale, "adapter perturbation magnitude");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        Settings s = resolve_settings(config_path, overrides);
        if (decompose->parsed()) return run_decompose(s, out_dir);
        if (train_cmd->parsed()) return run_train(s, out_dir);
        if (ablate->parsed()) return run_ablate(s, out_dir);
        if (sweep->parsed()) return run_sweep(s, out_dir, sizes_csv);
        if (verify->parsed()) return run_verify(s, checkpoint_path, perturb_scale);
        std::cerr << "no subcommand selected\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const contract_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
