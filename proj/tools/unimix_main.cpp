// unimix: adverse-weather LiDAR simulation, universal mixing, and the
// two-stage adaptation/generalization pipeline behind one executable.
//
// Exit codes: 0 success, 1 usage error, 2 data/runtime error.
// Logs go to stderr; files and metric tables are the data output.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "unimix/unimix.hpp"

namespace fs = std::filesystem;
using namespace unimix;

namespace {

struct ScanPair {
    std::string scan_path;
    std::string label_path;  // empty when absent
};

std::vector<ScanPair> list_scan_dir(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("not a directory: " + dir);
    std::vector<ScanPair> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".bin") continue;
        ScanPair p;
        p.scan_path = entry.path().string();
        fs::path label = entry.path();
        label.replace_extension(".label");
        if (fs::exists(label)) p.label_path = label.string();
        out.push_back(std::move(p));
    }
    std::sort(out.begin(), out.end(),
              [](const ScanPair& a, const ScanPair& b) { return a.scan_path < b.scan_path; });
    if (out.empty()) throw std::runtime_error("no .bin scans found in " + dir);
    return out;
}

DomainDataset load_dataset(const std::string& dir, const RemapTable& remap,
                           DomainTag tag) {
    DomainDataset ds;
    ds.tag = tag;
    for (const ScanPair& p : list_scan_dir(dir)) {
        LabeledScan scan;
        scan.cloud = read_scan(p.scan_path);
        if (!p.label_path.empty()) {
            std::size_t unmapped = 0;
            scan.labels = read_labels(p.label_path, remap, &unmapped);
            if (unmapped > 0)
                std::cerr << "warning: " << unmapped << " unmapped label ids in "
                          << p.label_path << " fell back to ignore\n";
            if (scan.labels.size() != scan.cloud.size())
                throw std::runtime_error("scan/label length mismatch for " + p.scan_path);
        } else if (tag != DomainTag::target) {
            throw std::runtime_error("missing label file for " + p.scan_path);
        } else {
            scan.labels.num_classes = remap.num_classes;
            scan.labels.ignore_id = remap.ignore_id;
            scan.labels.labels.assign(scan.cloud.size(), remap.ignore_id);
        }
        ds.samples.push_back(std::move(scan));
    }
    return ds;
}

void write_dataset(const DomainDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    char name[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::snprintf(name, sizeof(name), "%06zu", i);
        write_scan(ds.samples[i].cloud, dir + "/" + name + ".bin");
        write_labels(ds.samples[i].labels, dir + "/" + name + ".label");
    }
}

void write_provenance(const std::vector<Provenance>& prov, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (Provenance p : prov) out << to_string(p) << "\n";
}

void write_report(const StageReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    serialize_report(report, out);
}

// Synthetic desk-scale domain pair per the run config.
std::pair<DomainDataset, DomainDataset> synth_pair(const RunConfig& cfg) {
    SceneSpec source_spec = default_source_spec();
    SceneSpec target_spec = default_target_spec();
    source_spec.points_scale = cfg.synth_points_scale;
    target_spec.points_scale = cfg.synth_points_scale;
    Rng rng(derive_seed(cfg.seed, "synth-pair"));
    return generate_domain_pair(source_spec, target_spec, default_target_weather(),
                                cfg.synth_count, rng);
}

struct LoadedData {
    DomainDataset source;
    DomainDataset target;  // may be empty when no target configured
};

LoadedData resolve_datasets(const RunConfig& cfg) {
    LoadedData data;
    if (!cfg.source_dir.empty()) {
        RemapTable remap = cfg.remap_file.empty()
                               ? identity_remap(static_cast<std::uint16_t>(cfg.num_classes),
                                                static_cast<std::uint16_t>(cfg.ignore_id))
                               : load_remap(cfg.remap_file);
        data.source = load_dataset(cfg.source_dir, remap, DomainTag::source);
        if (!cfg.target_dir.empty())
            data.target = load_dataset(cfg.target_dir, remap, DomainTag::target);
    } else if (cfg.synth_enabled) {
        std::tie(data.source, data.target) = synth_pair(cfg);
    } else {
        throw std::runtime_error("no data: set data.source_dir or enable [synth]");
    }
    return data;
}

void print_eval(const EvalResult& ev, const std::vector<std::string>& names) {
    print_metric_report(ev.cm, names, std::cout);
}

std::vector<std::string> class_names_for(int num_classes) {
    if (num_classes == 6) return synth_class_names();
    if (num_classes == 20) return semantickitti_class_names();
    return {};
}

int cmd_simulate(const std::string& weather, double alpha, double rate,
                 std::uint64_t seed, const std::string& in,
                 const std::string& labels_path, const std::string& out_dir,
                 bool keep_scatter_labels, bool keep_lost) {
    PointCloud cloud = read_scan(in);
    RemapTable ident = passthrough_remap();
    LabelArray labels = read_labels(labels_path, ident);
    if (labels.size() != cloud.size())
        throw std::runtime_error("scan/label length mismatch");

    WeatherParams params;
    params.kind = weather_kind_from_string(weather);
    params.alpha = alpha;
    params.rate = rate;
    params.scatter_keeps_label = keep_scatter_labels;
    params.remove_lost_points = !keep_lost;
    params.seed = seed;

    Rng rng(derive_seed(seed, "simulate"));
    BridgeSample sample;
    switch (params.kind) {
        case WeatherKind::clear:
            sample.cloud = cloud;
            sample.labels = labels;
            sample.weather = params;
            sample.provenance.assign(cloud.size(), Provenance::unchanged);
            break;
        case WeatherKind::light_fog:
        case WeatherKind::dense_fog:
            sample = simulate_fog(cloud, labels, params, rng);
            break;
        case WeatherKind::rain:
        case WeatherKind::snow:
            sample = simulate_precipitation(cloud, labels, params, rng);
            break;
    }

    fs::create_directories(out_dir);
    std::string stem = fs::path(in).stem().string();
    write_scan(sample.cloud, out_dir + "/" + stem + ".bin");
    write_labels(sample.labels, out_dir + "/" + stem + ".label");
    write_provenance(sample.provenance, out_dir + "/" + stem + ".provenance");
    std::cerr << "simulate: " << to_string(sample.weather.kind) << " alpha="
              << sample.weather.alpha << " rate=" << sample.weather.rate
              << " seed=" << seed << "; " << cloud.size() << " -> "
              << sample.cloud.size() << " points\n";
    return 0;
}

int cmd_mix(const std::string& method, std::uint64_t seed, const std::string& a,
            const std::string& b, const std::string& out_dir, int num_classes,
            int ignore_id, const MixConfig& mix_cfg) {
    auto load_side = [&](const std::string& path) {
        LabeledScan s;
        s.cloud = read_scan(path);
        fs::path label = fs::path(path);
        label.replace_extension(".label");
        if (fs::exists(label)) {
            s.labels = read_labels(label.string(),
                                   identity_remap(static_cast<std::uint16_t>(num_classes),
                                                  static_cast<std::uint16_t>(ignore_id)));
            if (s.labels.size() != s.cloud.size())
                throw std::runtime_error("scan/label length mismatch for " + path);
        } else {
            s.labels.num_classes = static_cast<std::uint16_t>(num_classes);
            s.labels.ignore_id = static_cast<std::uint16_t>(ignore_id);
            s.labels.labels.assign(s.cloud.size(),
                                   static_cast<std::uint16_t>(ignore_id));
        }
        return s;
    };
    LabeledScan sa = load_side(a);
    LabeledScan sb = load_side(b);

    MixKind kind;
    if (method == "spatial") kind = MixKind::spatial;
    else if (method == "intensity") kind = MixKind::intensity;
    else if (method == "semantic") kind = MixKind::semantic;
    else throw CLI::ValidationError("--method", "unknown method '" + method + "'");

    Rng rng(derive_seed(seed, "mix"));
    MixedPair mixed = mix_bidirectional(sa.cloud, sa.labels, sb.cloud, sb.labels,
                                        kind, mix_cfg, rng);
    fs::create_directories(out_dir);
    write_scan(mixed.cloud_s_to_t, out_dir + "/a2b.bin");
    write_labels(mixed.labels_s_to_t, out_dir + "/a2b.label");
    write_scan(mixed.cloud_t_to_s, out_dir + "/b2a.bin");
    write_labels(mixed.labels_t_to_s, out_dir + "/b2a.label");
    std::cerr << "mix: " << method << " seed=" << seed << "; a2b="
              << mixed.cloud_s_to_t.size() << " b2a=" << mixed.cloud_t_to_s.size()
              << " points\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, bool run_stage2) {
    print_config(cfg, std::cerr);
    LoadedData data = resolve_datasets(cfg);
    fs::create_directories(cfg.out_dir);

    FeatureSpec spec;
    Stage1Result s1 = train_stage1(data.source, cfg, spec);
    save_checkpoint(s1.warmup_params, cfg.out_dir + "/warmup.ckpt");
    save_checkpoint(s1.student, cfg.out_dir + "/student1.ckpt");
    save_checkpoint(s1.teacher, cfg.out_dir + "/teacher1.ckpt");
    write_report(s1.report, cfg.out_dir + "/report_stage1.txt");
    std::cerr << "stage1 done: " << s1.report.batches.size() << " batches, "
              << s1.report.wall_seconds << " s\n";

    std::vector<std::string> names = class_names_for(cfg.num_classes);
    if (data.target.size() > 0) {
        EvalResult dg = evaluate(s1.student, data.target, spec,
                                 static_cast<std::uint16_t>(cfg.num_classes),
                                 static_cast<std::uint16_t>(cfg.ignore_id));
        std::cout << "== DG evaluation (stage-1 student on target) ==\n";
        print_eval(dg, names);
    }

    if (!run_stage2) return 0;
    if (data.target.size() == 0)
        throw std::runtime_error("train-uda needs target data (target_dir or synth)");

    Stage2Result s2 = train_stage2(data.source, data.target, s1.student, cfg, spec,
                                   &data.target);
    save_checkpoint(s2.student, cfg.out_dir + "/student2.ckpt");
    save_checkpoint(s2.teacher, cfg.out_dir + "/teacher2.ckpt");
    write_report(s2.report, cfg.out_dir + "/report_stage2.txt");
    std::cerr << "stage2 done: " << s2.report.batches.size() << " batches, "
              << s2.report.wall_seconds << " s\n";

    EvalResult uda = evaluate(s2.student, data.target, spec,
                              static_cast<std::uint16_t>(cfg.num_classes),
                              static_cast<std::uint16_t>(cfg.ignore_id));
    std::cout << "== UDA evaluation (stage-2 student on target) ==\n";
    print_eval(uda, names);
    return 0;
}

int cmd_warmup(const RunConfig& cfg) {
    print_config(cfg, std::cerr);
    LoadedData data = resolve_datasets(cfg);
    fs::create_directories(cfg.out_dir);
    ModelParams params = warmup(data.source, cfg);
    save_checkpoint(params, cfg.out_dir + "/warmup.ckpt");
    std::cerr << "warmup done: " << cfg.warmup_epochs << " epochs on "
              << data.source.size() << " scans\n";
    if (data.target.size() > 0) {
        EvalResult ev = evaluate(params, data.target, FeatureSpec{},
                                 static_cast<std::uint16_t>(cfg.num_classes),
                                 static_cast<std::uint16_t>(cfg.ignore_id));
        std::cout << "== Source-only evaluation on target ==\n";
        print_eval(ev, class_names_for(cfg.num_classes));
    }
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir,
             int num_classes, int ignore_id, const std::string& remap_file) {
    ModelParams model = load_checkpoint(model_path);
    RemapTable remap = remap_file.empty()
                           ? identity_remap(static_cast<std::uint16_t>(num_classes),
                                            static_cast<std::uint16_t>(ignore_id))
                           : load_remap(remap_file);
    DomainDataset data = load_dataset(data_dir, remap, DomainTag::source);
    std::cerr << "eval: " << data.size() << " labeled scans from " << data_dir << "\n";
    EvalResult ev = evaluate(model, data, FeatureSpec{},
                             static_cast<std::uint16_t>(num_classes),
                             static_cast<std::uint16_t>(ignore_id));
    print_eval(ev, class_names_for(num_classes));
    return 0;
}

int cmd_synth(const std::string& out_dir, int count, std::uint64_t seed,
              double points_scale, bool source_only, bool target_only) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.synth_count = count;
    cfg.synth_points_scale = points_scale;
    auto [source, target] = synth_pair(cfg);
    if (!target_only) write_dataset(source, out_dir + "/source");
    if (!source_only) write_dataset(target, out_dir + "/target");
    std::cerr << "synth: " << count << " scans per domain, seed=" << seed
              << ", into " << out_dir << "\n";
    return 0;
}

int cmd_export_ply(const std::string& in, const std::string& labels_path,
                   const std::string& out) {
    PointCloud cloud = read_scan(in);
    RemapTable ident = passthrough_remap();
    LabelArray labels = read_labels(labels_path, ident);
    if (labels.size() != cloud.size())
        throw std::runtime_error("scan/label length mismatch");
    export_ply(cloud, labels, default_colormap(), out);
    std::cerr << "export-ply: " << cloud.size() << " vertices -> " << out << "\n";
    return 0;
}

int cmd_integrate_eq1(double range, int steps, double tau, double amplitude,
                      double c_a, double c, const std::string& response) {
    PulseModel model = PulseModel::rectangular(amplitude, tau, c_a, c);
    double analytic = 0.0;
    const double sweep = 2.0 * range / c;
    const double m = std::min(tau, sweep);
    if (response == "const") {
        model.response = [](double) { return 1.0; };
        analytic = c_a * amplitude * m;
    } else if (response == "linear") {
        model.response = [](double x) { return x; };
        analytic = c_a * amplitude * (range * m - c * m * m / 4.0);
    } else if (response == "quadratic") {
        model.response = [](double x) { return x * x; };
        double edge = range - c * m / 2.0;
        analytic = c_a * amplitude * (2.0 / (3.0 * c)) *
                   (range * range * range - edge * edge * edge);
    } else {
        throw CLI::ValidationError("--response", "unknown response '" + response + "'");
    }
    double numeric = received_power(model, range, steps);
    std::cout << "numeric   = " << std::setprecision(12) << numeric << "\n"
              << "analytic  = " << analytic << "\n"
              << "abs error = " << std::abs(numeric - analytic) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UniMix point-cloud domain-adaptation toolkit"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "apply adverse weather to a scan");
    std::string sim_weather = "dense-fog", sim_in, sim_labels, sim_out = "out";
    double sim_alpha = 0.12, sim_rate = 0.5;
    std::uint64_t sim_seed = 1;
    bool sim_keep_scatter = false, sim_keep_lost = false;
    simulate->add_option("--weather", sim_weather,
                         "clear|light-fog|dense-fog|rain|snow")->capture_default_str();
    simulate->add_option("--alpha", sim_alpha, "attenuation coefficient (1/m)")
        ->capture_default_str();
    simulate->add_option("--rate", sim_rate, "precipitation rate")->capture_default_str();
    simulate->add_option("--seed", sim_seed, "rng seed")->capture_default_str();
    simulate->add_option("--in", sim_in, "input scan (.bin)")->required();
    simulate->add_option("--labels", sim_labels, "input labels (.label)")->required();
    simulate->add_option("--out-dir", sim_out, "output directory")->capture_default_str();
    simulate->add_flag("--keep-scatter-labels", sim_keep_scatter,
                       "scattered points keep their original label");
    simulate->add_flag("--keep-lost", sim_keep_lost,
                       "keep sub-noise-floor points instead of removing them");

    // mix
    auto* mixcmd = app.add_subcommand("mix", "bidirectional universal mixing of two scans");
    std::string mix_method = "spatial", mix_a, mix_b, mix_out = "out";
    std::uint64_t mix_seed = 1;
    int mix_classes = 20, mix_ignore = 0;
    MixConfig mix_cfg;
    mixcmd->add_option("--method", mix_method, "spatial|intensity|semantic")
        ->capture_default_str();
    mixcmd->add_option("--seed", mix_seed, "rng seed")->capture_default_str();
    mixcmd->add_option("--a", mix_a, "scan A (.bin; sibling .label used if present)")
        ->required();
    mixcmd->add_option("--b", mix_b, "scan B (.bin)")->required();
    mixcmd->add_option("--out-dir", mix_out, "output directory")->capture_default_str();
    mixcmd->add_option("--num-classes", mix_classes, "label class count")
        ->capture_default_str();
    mixcmd->add_option("--ignore", mix_ignore, "ignore class id")->capture_default_str();
    mixcmd->add_option("--delta-rho", mix_cfg.delta_rho_frac,
                       "radial interval fraction")->capture_default_str();
    mixcmd->add_option("--delta-theta", mix_cfg.delta_theta,
                       "azimuth interval (radians)")->capture_default_str();
    mixcmd->add_option("--delta-z", mix_cfg.delta_z_frac, "height interval fraction")
        ->capture_default_str();
    mixcmd->add_option("--delta-i", mix_cfg.delta_i_frac, "intensity interval fraction")
        ->capture_default_str();
    mixcmd->add_option("--class-prob", mix_cfg.class_select_prob,
                       "semantic class selection probability")->capture_default_str();

    // config-driven training commands
    std::string cfg_path;
    auto* warmupcmd = app.add_subcommand("warmup", "source-only training (baseline)");
    warmupcmd->add_option("--config", cfg_path, "run configuration file")->required();
    auto* dg = app.add_subcommand("train-dg",
                                  "warm-up + stage 1; evaluates the DG student");
    dg->add_option("--config", cfg_path, "run configuration file")->required();
    auto* uda = app.add_subcommand("train-uda",
                                   "full two-stage pipeline; evaluates the UDA student");
    uda->add_option("--config", cfg_path, "run configuration file")->required();

    // eval
    auto* evalcmd = app.add_subcommand("eval", "evaluate a checkpoint on a labeled dir");
    std::string eval_model, eval_data, eval_remap;
    int eval_classes = 6, eval_ignore = 0;
    evalcmd->add_option("--model", eval_model, "checkpoint file")->required();
    evalcmd->add_option("--data", eval_data, "directory of .bin/.label pairs")->required();
    evalcmd->add_option("--num-classes", eval_classes, "label class count")
        ->capture_default_str();
    evalcmd->add_option("--ignore", eval_ignore, "ignore class id")->capture_default_str();
    evalcmd->add_option("--remap", eval_remap, "remap table file (raw -> common ids)");

    // synth
    auto* synthcmd = app.add_subcommand("synth", "generate the synthetic domain pair");
    std::string synth_out = "out";
    int synth_count = 20;
    std::uint64_t synth_seed = 1;
    double synth_scale = 1.0;
    bool synth_source_only = false, synth_target_only = false;
    synthcmd->add_option("--out-dir", synth_out, "output directory")->capture_default_str();
    synthcmd->add_option("--count", synth_count, "scans per domain")->capture_default_str();
    synthcmd->add_option("--seed", synth_seed, "rng seed")->capture_default_str();
    synthcmd->add_option("--points-scale", synth_scale, "point budget multiplier")
        ->capture_default_str();
    synthcmd->add_flag("--source-only", synth_source_only, "write only the source domain");
    synthcmd->add_flag("--target-only", synth_target_only, "write only the target domain");

    // export-ply
    auto* ply = app.add_subcommand("export-ply", "write an ASCII PLY with class colors");
    std::string ply_in, ply_labels, ply_out = "cloud.ply";
    ply->add_option("--in", ply_in, "input scan (.bin)")->required();
    ply->add_option("--labels", ply_labels, "input labels (.label)")->required();
    ply->add_option("--out", ply_out, "output PLY path")->capture_default_str();

    // integrate-eq1
    auto* eq1 = app.add_subcommand("integrate-eq1",
                                   "numeric received-power integral vs closed form");
    double eq1_range = 1.0, eq1_tau = 0.5, eq1_amp = 1.0, eq1_ca = 1.0, eq1_c = 1.0;
    int eq1_steps = 10000;
    std::string eq1_response = "const";
    eq1->add_option("--range", eq1_range, "target range")->capture_default_str();
    eq1->add_option("--steps", eq1_steps, "integration steps")->capture_default_str();
    eq1->add_option("--tau", eq1_tau, "pulse duration")->capture_default_str();
    eq1->add_option("--amplitude", eq1_amp, "pulse amplitude")->capture_default_str();
    eq1->add_option("--ca", eq1_ca, "system constant")->capture_default_str();
    eq1->add_option("--c", eq1_c, "propagation speed")->capture_default_str();
    eq1->add_option("--response", eq1_response, "const|linear|quadratic")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (simulate->parsed())
            return cmd_simulate(sim_weather, sim_alpha, sim_rate, sim_seed, sim_in,
                                sim_labels, sim_out, sim_keep_scatter, sim_keep_lost);
        if (mixcmd->parsed())
            return cmd_mix(mix_method, mix_seed, mix_a, mix_b, mix_out, mix_classes,
                           mix_ignore, mix_cfg);
        if (warmupcmd->parsed()) return cmd_warmup(load_config(cfg_path));
        if (dg->parsed()) return cmd_train(load_config(cfg_path), false);
        if (uda->parsed()) return cmd_train(load_config(cfg_path), true);
        if (evalcmd->parsed())
            return cmd_eval(eval_model, eval_data, eval_classes, eval_ignore, eval_remap);
        if (synthcmd->parsed())
            return cmd_synth(synth_out, synth_count, synth_seed, synth_scale,
                             synth_source_only, synth_target_only);
        if (ply->parsed()) return cmd_export_ply(ply_in, ply_labels, ply_out);
        if (eq1->parsed())
            return cmd_integrate_eq1(eq1_range, eq1_steps, eq1_tau, eq1_amp, eq1_ca,
                                     eq1_c, eq1_response);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
