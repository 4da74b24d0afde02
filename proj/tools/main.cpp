#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "povmkit/analysis.hpp"
#include "povmkit/errors.hpp"
#include "povmkit/io.hpp"
#include "povmkit/models.hpp"
#include "povmkit/povm.hpp"
#include "povmkit/probes.hpp"
#include "povmkit/rng.hpp"
#include "povmkit/tomography.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct ProbeParams {
    double mu_max = 100.0;
    int count = 30;
};

struct DetectorEntry {
    std::string name;
    fs::path model_path;
    std::optional<ProbeParams> probes;
};

struct RunManifest {
    fs::path output_dir = "out";
    bool seed_set = false;
    std::uint64_t seed = 0;
    long long shots = 1000000;
    int comparison_dimension = 5000;
    ProbeParams probes;
    povmkit::ReconstructionConfig recon;
    double uncertainty_amplitude = 0.0;
    int uncertainty_trials = 0;
    std::vector<DetectorEntry> detectors;
};

std::string stem_of(const fs::path& p) { return p.stem().string(); }

RunManifest manifest_from_json(const json& j) {
    if (!j.is_object())
        throw povmkit::ParameterError("manifest must be a JSON object");
    RunManifest man;
    man.output_dir = j.value("output_dir", std::string("out"));
    if (j.contains("seed")) {
        man.seed = j.at("seed").get<std::uint64_t>();
        man.seed_set = true;
    }
    man.shots = j.value("shots", man.shots);
    man.comparison_dimension =
        j.value("comparison_dimension", man.comparison_dimension);
    if (j.contains("probes")) {
        const json& p = j.at("probes");
        man.probes.mu_max = p.value("mu_max", man.probes.mu_max);
        man.probes.count = p.value("count", man.probes.count);
    }
    if (j.contains("reconstruction")) {
        const json& r = j.at("reconstruction");
        man.recon.gamma = r.value("gamma", man.recon.gamma);
        man.recon.max_iter = r.value("max_iter", man.recon.max_iter);
        man.recon.tol = r.value("tol", man.recon.tol);
        man.recon.dimension = r.value("dimension", man.recon.dimension);
    }
    if (j.contains("uncertainty")) {
        const json& u = j.at("uncertainty");
        man.uncertainty_amplitude = u.value("amplitude", 0.0);
        man.uncertainty_trials = u.value("trials", 0);
    }
    if (j.contains("detectors")) {
        for (const json& d : j.at("detectors")) {
            DetectorEntry det;
            if (d.is_string()) {
                det.model_path = d.get<std::string>();
                det.name = stem_of(det.model_path);
            } else {
                det.model_path = d.at("model").get<std::string>();
                det.name = d.value("name", stem_of(det.model_path));
                if (d.contains("probes")) {
                    ProbeParams pp = man.probes;
                    pp.mu_max = d.at("probes").value("mu_max", pp.mu_max);
                    pp.count = d.at("probes").value("count", pp.count);
                    det.probes = pp;
                }
            }
            man.detectors.push_back(det);
        }
    }
    return man;
}

void validate_manifest(const RunManifest& man) {
    if (!man.seed_set)
        throw povmkit::ParameterError(
            "manifest must set a seed; runs never default to wall-clock time");
    if (man.detectors.empty())
        throw povmkit::ParameterError("manifest lists no detectors");
    if (man.shots < 1) throw povmkit::ParameterError("shots must be >= 1");
    if (man.comparison_dimension < 2)
        throw povmkit::ParameterError("comparison dimension must be >= 2");
    std::set<std::string> names;
    for (const DetectorEntry& det : man.detectors) {
        if (det.name.empty())
            throw povmkit::ParameterError("detector name is empty");
        if (!names.insert(det.name).second)
            throw povmkit::ParameterError("duplicate detector name: " +
                                          det.name);
    }
}

povmkit::ProbeSet probes_for(const RunManifest& man, const DetectorEntry& det) {
    const ProbeParams pp = det.probes ? *det.probes : man.probes;
    return povmkit::quadratic_probe_set(pp.mu_max, pp.count);
}

povmkit::PovmSet build_model_povm(const povmkit::DetectorModel& model, int m) {
    if (const auto* es = std::get_if<povmkit::EqualSplitModel>(&model))
        return povmkit::equal_split_povm(*es, m);
    return povmkit::loop_povm(std::get<povmkit::LogLoopModel>(model), m);
}

int model_bins(const povmkit::DetectorModel& model) {
    if (const auto* es = std::get_if<povmkit::EqualSplitModel>(&model))
        return es->bins;
    return std::get<povmkit::LogLoopModel>(model).bins;
}

povmkit::FitOptions fit_options_for(const povmkit::DetectorModel& model,
                                    const povmkit::ProbeSet& probes) {
    povmkit::FitOptions opts;
    if (const auto* ll = std::get_if<povmkit::LogLoopModel>(&model)) {
        opts.family = povmkit::FitFamily::log_loop;
        opts.out_coupling = ll->out_coupling;
        opts.loop_efficiency = ll->loop_efficiency;
    }
    opts.fit_limit = povmkit::data_support_limit(probes);
    return opts;
}

povmkit::DetectorModel load_model(const DetectorEntry& det) {
    return povmkit::model_from_json(povmkit::read_text_file(det.model_path));
}

void cmd_model(const RunManifest& man) {
    std::vector<povmkit::PovmSet> sets;
    for (const DetectorEntry& det : man.detectors) {
        const povmkit::DetectorModel model = load_model(det);
        povmkit::PovmSet set =
            build_model_povm(model, man.comparison_dimension);
        if (std::holds_alternative<povmkit::EqualSplitModel>(model)) {
            const int k = set.outcome_count();
            if (set.weights(k - 1, set.dimension() - 1) < 0.99)
                throw povmkit::ParameterError(
                    "comparison dimension is below the saturation-adequate "
                    "dimension of detector " +
                    det.name);
        }
        const std::vector<std::string> issues = povmkit::validate(set, 1e-6);
        if (!issues.empty())
            throw povmkit::ParameterError(det.name + " model POVM invalid: " +
                                          issues.front());
        sets.push_back(std::move(set));
    }
    fs::create_directories(man.output_dir);
    for (std::size_t d = 0; d < man.detectors.size(); ++d) {
        const std::string& name = man.detectors[d].name;
        povmkit::atomic_write(man.output_dir / (name + "_model_povm.json"),
                              povmkit::povm_to_json(sets[d]));
        povmkit::atomic_write(man.output_dir / (name + "_model_povm.csv"),
                              povmkit::povm_to_csv(sets[d]));
        std::cout << "model: " << name << " K=" << sets[d].outcome_count()
                  << " M=" << sets[d].dimension() << "\n";
    }
}

void cmd_simulate(const RunManifest& man) {
    std::vector<povmkit::ProbeSet> probe_sets;
    std::vector<povmkit::OutcomeStats> stats_list;
    for (std::size_t d = 0; d < man.detectors.size(); ++d) {
        const DetectorEntry& det = man.detectors[d];
        const povmkit::PovmSet set = povmkit::povm_from_json(
            povmkit::read_text_file(man.output_dir /
                                    (det.name + "_model_povm.json")));
        povmkit::ProbeSet probes = probes_for(man, det);
        stats_list.push_back(povmkit::simulate_outcomes(
            set, probes, man.shots,
            povmkit::derive_seed(man.seed, static_cast<std::uint64_t>(d))));
        probe_sets.push_back(std::move(probes));
    }
    fs::create_directories(man.output_dir);
    for (std::size_t d = 0; d < man.detectors.size(); ++d) {
        const std::string& name = man.detectors[d].name;
        povmkit::atomic_write(man.output_dir / (name + "_probes.json"),
                              povmkit::probes_to_json(probe_sets[d]));
        povmkit::atomic_write(
            man.output_dir / (name + "_stats.csv"),
            povmkit::stats_to_csv(stats_list[d], probe_sets[d]));
        std::cout << "simulate: " << name << " probes=" << probe_sets[d].size()
                  << " shots=" << man.shots << "\n";
    }
}

void cmd_reconstruct(const RunManifest& man) {
    std::vector<povmkit::ReconstructionResult> results;
    for (const DetectorEntry& det : man.detectors) {
        const auto [csv_probes, stats] = povmkit::stats_from_csv(
            povmkit::read_text_file(man.output_dir /
                                    (det.name + "_stats.csv")));
        const povmkit::ProbeSet probes = povmkit::probes_from_json(
            povmkit::read_text_file(man.output_dir /
                                    (det.name + "_probes.json")));
        if (probes.size() != csv_probes.size() ||
            (probes.means - csv_probes.means).cwiseAbs().maxCoeff() != 0.0)
            throw povmkit::ParameterError(
                "probe file and stats CSV disagree for " + det.name);
        const int k = static_cast<int>(stats.frequencies.cols());
        results.push_back(povmkit::reconstruct(stats, probes, k, man.recon));
    }
    fs::create_directories(man.output_dir);
    for (std::size_t d = 0; d < man.detectors.size(); ++d) {
        const std::string& name = man.detectors[d].name;
        const povmkit::ReconstructionResult& res = results[d];
        povmkit::atomic_write(man.output_dir / (name + "_recon_povm.json"),
                              povmkit::povm_to_json(res.povm));
        povmkit::atomic_write(man.output_dir / (name + "_recon_povm.csv"),
                              povmkit::povm_to_csv(res.povm));
        ordered_json report;
        report["residual"] = res.residual;
        report["iterations"] = res.iterations;
        report["converged"] = res.converged;
        report["gamma"] = res.gamma;
        povmkit::atomic_write(man.output_dir / (name + "_recon_report.json"),
                              report.dump(2) + "\n");
        std::cout << "reconstruct: " << name << " residual=" << res.residual
                  << " iterations=" << res.iterations
                  << (res.converged ? "" : " (not converged)") << "\n";
    }
}

json metrics_rows(const std::vector<povmkit::OutcomeMetrics>& metrics) {
    json rows = json::array();
    for (const povmkit::OutcomeMetrics& m : metrics) {
        json row;
        row["n"] = m.n;
        if (m.defined) {
            row["purity"] = m.purity;
            row["effective_states"] = m.effective_states;
            row["missing_bits"] = m.missing_bits;
            row["extracted_bits"] = m.extracted_bits;
        } else {
            row["purity"] = nullptr;
            row["effective_states"] = nullptr;
            row["missing_bits"] = nullptr;
            row["extracted_bits"] = nullptr;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string plot_csv(const std::vector<povmkit::OutcomeMetrics>& metrics) {
    std::string out = "n,purity,effective_states,missing_bits,extracted_bits\n";
    for (const povmkit::OutcomeMetrics& m : metrics) {
        out += std::to_string(m.n);
        if (m.defined) {
            out += "," + povmkit::detail::format_double(m.purity);
            out += "," + povmkit::detail::format_double(m.effective_states);
            out += "," + povmkit::detail::format_double(m.missing_bits);
            out += "," + povmkit::detail::format_double(m.extracted_bits);
        } else {
            out += ",,,,";
        }
        out += "\n";
    }
    return out;
}

ordered_json fom_json(const povmkit::FiguresOfMerit& f,
                      const std::string& family, const std::string& target) {
    ordered_json j;
    j["family"] = family;
    j["fit_target"] = target;
    j["efficiency"] = f.efficiency;
    j["efficiency_err"] = f.efficiency_err;
    j["efficiency_one_sided"] = f.efficiency_one_sided;
    j["dark_prob"] = f.dark_prob;
    j["dark_err"] = f.dark_err;
    j["dark_one_sided"] = f.dark_one_sided;
    j["crosstalk_prob"] = f.crosstalk_prob;
    j["crosstalk_err"] = f.crosstalk_err;
    j["crosstalk_one_sided"] = f.crosstalk_one_sided;
    j["fit_rms"] = f.fit_rms;
    j["fit_range"] = f.fit_range;
    return j;
}

void cmd_analyze(const RunManifest& man) {
    struct Entry {
        povmkit::DetectorModel model;
        povmkit::PovmSet model_set;
        std::optional<povmkit::PovmSet> recon;
        std::optional<povmkit::OutcomeStats> stats;
        povmkit::ProbeSet probes;
    };
    std::vector<Entry> entries;
    for (const DetectorEntry& det : man.detectors) {
        Entry e{load_model(det),
                povmkit::povm_from_json(povmkit::read_text_file(
                    man.output_dir / (det.name + "_model_povm.json"))),
                std::nullopt,
                std::nullopt,
                {}};
        const fs::path recon_path =
            man.output_dir / (det.name + "_recon_povm.json");
        if (fs::exists(recon_path))
            e.recon = povmkit::povm_from_json(povmkit::read_text_file(recon_path));
        const fs::path probes_path =
            man.output_dir / (det.name + "_probes.json");
        e.probes = fs::exists(probes_path)
                       ? povmkit::probes_from_json(
                             povmkit::read_text_file(probes_path))
                       : probes_for(man, det);
        const fs::path stats_path = man.output_dir / (det.name + "_stats.csv");
        if (fs::exists(stats_path))
            e.stats = povmkit::stats_from_csv(
                          povmkit::read_text_file(stats_path))
                          .second;
        entries.push_back(std::move(e));
    }

    fs::create_directories(man.output_dir);
    ordered_json report;
    report["comparison_dimension"] = man.comparison_dimension;
    report["h_total_bits"] = povmkit::h_total(man.comparison_dimension);
    report["detectors"] = json::array();
    std::string comparison =
        "detector,n,purity,effective_states,missing_bits,extracted_bits\n";
    std::cout << "analyze: H_total(" << man.comparison_dimension << ") = "
              << povmkit::detail::format_double(
                     povmkit::h_total(man.comparison_dimension))
              << " bits\n";

    for (std::size_t d = 0; d < man.detectors.size(); ++d) {
        const std::string& name = man.detectors[d].name;
        const Entry& e = entries[d];
        const std::vector<povmkit::OutcomeMetrics> model_metrics =
            povmkit::compute_metrics(e.model_set);
        povmkit::atomic_write(man.output_dir / (name + "_model_plot.csv"),
                              plot_csv(model_metrics));
        for (const povmkit::OutcomeMetrics& m : model_metrics) {
            comparison += name + "," + std::to_string(m.n);
            if (m.defined) {
                comparison +=
                    "," + povmkit::detail::format_double(m.purity) + "," +
                    povmkit::detail::format_double(m.effective_states) + "," +
                    povmkit::detail::format_double(m.missing_bits) + "," +
                    povmkit::detail::format_double(m.extracted_bits);
            } else {
                comparison += ",,,,";
            }
            comparison += "\n";
        }

        ordered_json dj;
        dj["name"] = name;
        ordered_json mj;
        mj["dimension"] = e.model_set.dimension();
        mj["outcomes"] = metrics_rows(model_metrics);
        dj["model"] = mj;

        const povmkit::FitOptions fit_opts = fit_options_for(e.model, e.probes);
        const std::string family =
            fit_opts.family == povmkit::FitFamily::equal_split ? "equal_split"
                                                               : "log_loop";
        const int bins = model_bins(e.model);

        if (e.recon) {
            povmkit::PovmSet analysis_set = *e.recon;
            bool extended = false;
            if (analysis_set.dimension() < man.comparison_dimension) {
                try {
                    analysis_set = povmkit::extend_to(
                        analysis_set, man.comparison_dimension);
                    extended = true;
                } catch (const povmkit::SaturationError&) {
                    analysis_set = *e.recon;
                }
            }
            const std::vector<povmkit::OutcomeMetrics> recon_metrics =
                povmkit::compute_metrics(analysis_set);
            povmkit::atomic_write(man.output_dir / (name + "_recon_plot.csv"),
                                  plot_csv(recon_metrics));
            ordered_json rj;
            rj["dimension"] = analysis_set.dimension();
            rj["extended"] = extended;
            rj["outcomes"] = metrics_rows(recon_metrics);
            dj["reconstruction"] = rj;

            povmkit::FiguresOfMerit fom =
                povmkit::figures_of_merit(*e.recon, bins, fit_opts);
            if (e.stats && man.uncertainty_trials >= 2 &&
                man.uncertainty_amplitude > 0.0) {
                povmkit::ReconstructionConfig pinned = man.recon;
                pinned.dimension = e.recon->dimension();
                fom = povmkit::uncertainty_bars(
                    *e.stats, e.probes, e.recon->outcome_count(), pinned,
                    man.uncertainty_amplitude, man.uncertainty_trials,
                    povmkit::derive_seed(man.seed, 100000 + d), fit_opts, fom);
            }
            dj["figures_of_merit"] = fom_json(fom, family, "reconstruction");
            std::cout << "analyze: " << name << " eta=" << fom.efficiency
                      << " p_dark=" << fom.dark_prob
                      << " p_xtalk=" << fom.crosstalk_prob << "\n";
        } else {
            dj["reconstruction"] = nullptr;
            const povmkit::FiguresOfMerit fom =
                povmkit::figures_of_merit(e.model_set, bins, fit_opts);
            dj["figures_of_merit"] = fom_json(fom, family, "model");
            std::cout << "analyze: " << name << " eta=" << fom.efficiency
                      << " p_dark=" << fom.dark_prob
                      << " p_xtalk=" << fom.crosstalk_prob << "\n";
        }
        report["detectors"].push_back(dj);
    }
    povmkit::atomic_write(man.output_dir / "metrics.json",
                          report.dump(2) + "\n");
    povmkit::atomic_write(man.output_dir / "comparison.csv", comparison);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "povmkit: model, simulate, reconstruct, and analyze multiplexed "
        "photon-counting detectors"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> manifest_path;
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<long long> shots;
    std::optional<int> comparison_dimension;
    std::optional<double> mu_max;
    std::optional<int> probe_count;
    std::optional<double> gamma;
    std::optional<long long> max_iter;
    std::optional<double> tol;
    std::optional<int> recon_dimension;
    std::optional<double> uncertainty_amplitude;
    std::optional<int> uncertainty_trials;
    std::vector<std::string> model_paths;
    std::vector<std::string> names;

    app.add_option("--manifest", manifest_path, "Run manifest JSON file");
    app.add_option("--output-dir", output_dir, "Output directory");
    app.add_option("--seed", seed, "Base RNG seed (required)");
    app.add_option("--shots", shots, "Shots per probe");
    app.add_option("--comparison-dimension", comparison_dimension,
                   "Photon-number dimension for metric comparison");
    app.add_option("--mu-max", mu_max, "Largest probe mean photon number");
    app.add_option("--probe-count", probe_count, "Number of probe states");
    app.add_option("--gamma", gamma,
                   "Smoothing weight (negative = automatic)");
    app.add_option("--max-iter", max_iter, "Solver iteration cap");
    app.add_option("--tol", tol, "Relative objective decrease tolerance");
    app.add_option("--recon-dimension", recon_dimension,
                   "Reconstruction dimension (0 = adequacy bound)");
    app.add_option("--uncertainty-amplitude", uncertainty_amplitude,
                   "Probe amplitude uncertainty for error bars");
    app.add_option("--uncertainty-trials", uncertainty_trials,
                   "Trials for error bars");
    app.add_option("--model", model_paths,
                   "Detector model JSON (repeatable)");
    app.add_option("--name", names,
                   "Detector name (repeatable, pairs with --model)");

    CLI::App* sub_model = app.add_subcommand("model", "Write model POVMs");
    CLI::App* sub_simulate =
        app.add_subcommand("simulate", "Simulate probe outcome statistics");
    CLI::App* sub_reconstruct =
        app.add_subcommand("reconstruct", "Reconstruct POVMs from statistics");
    CLI::App* sub_analyze =
        app.add_subcommand("analyze", "Compute metrics and figures of merit");
    CLI::App* sub_all = app.add_subcommand("all", "Run the full pipeline");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunManifest man;
        if (manifest_path) {
            man = manifest_from_json(
                json::parse(povmkit::read_text_file(*manifest_path)));
        }
        if (output_dir) man.output_dir = *output_dir;
        if (seed) {
            man.seed = *seed;
            man.seed_set = true;
        }
        if (shots) man.shots = *shots;
        if (comparison_dimension)
            man.comparison_dimension = *comparison_dimension;
        if (mu_max) man.probes.mu_max = *mu_max;
        if (probe_count) man.probes.count = *probe_count;
        if (gamma) man.recon.gamma = *gamma;
        if (max_iter) man.recon.max_iter = *max_iter;
        if (tol) man.recon.tol = *tol;
        if (recon_dimension) man.recon.dimension = *recon_dimension;
        if (uncertainty_amplitude)
            man.uncertainty_amplitude = *uncertainty_amplitude;
        if (uncertainty_trials) man.uncertainty_trials = *uncertainty_trials;
        if (names.size() > model_paths.size())
            throw povmkit::ParameterError("--name given without a --model");
        for (std::size_t i = 0; i < model_paths.size(); ++i) {
            DetectorEntry det;
            det.model_path = model_paths[i];
            det.name = i < names.size() ? names[i]
                                        : stem_of(det.model_path);
            man.detectors.push_back(det);
        }
        validate_manifest(man);

        if (sub_model->parsed() || sub_all->parsed()) cmd_model(man);
        if (sub_simulate->parsed() || sub_all->parsed()) cmd_simulate(man);
        if (sub_reconstruct->parsed() || sub_all->parsed())
            cmd_reconstruct(man);
        if (sub_analyze->parsed() || sub_all->parsed()) cmd_analyze(man);
        return 0;
    } catch (const povmkit::TruncationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const povmkit::SaturationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const povmkit::FitDivergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
