// Structured run configuration: a plain-text key-value file with [section]
// headers. Every key has a default; the training defaults are the
// full-scale recipe (SGD lr 0.001, batch 4, 10 warm-up epochs, stages of
// 10 and 50 epochs).

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace unimix {

enum class OperatorPolicy { uniform_choice, fixed_spatial, fixed_intensity,
                            fixed_semantic, compose_all };

enum class BridgeLabelSource { teacher, ground_truth };

struct RunConfig {
    // [run]
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    // [train]
    int warmup_epochs = 10;
    int stage1_epochs = 10;   // E1
    int stage2_epochs = 50;   // E2
    int batch_size = 4;
    double learning_rate = 0.001;
    double ema_decay = 0.99;
    double pseudo_label_threshold = 0.0;  // 0 disables thresholding
    BridgeLabelSource bridge_labels = BridgeLabelSource::teacher;
    bool use_bridge = true;          // false: stage 2 mixes clear source directly
    bool regenerate_bridge = true;   // fresh weather draw per scan per epoch

    // [model]
    int hidden1 = 64;
    int hidden2 = 64;

    // [mix]
    double delta_rho_frac = 0.5;
    double delta_theta = M_PI;
    double delta_z_frac = 0.5;
    double delta_i_frac = 0.5;
    double class_select_prob = 0.5;
    OperatorPolicy operator_policy = OperatorPolicy::uniform_choice;

    // [weather] composition weights; equal over the four adverse kinds by
    // default, clear excluded.
    double w_clear = 0.0;
    double w_light_fog = 1.0;
    double w_dense_fog = 1.0;
    double w_rain = 1.0;
    double w_snow = 1.0;
    std::vector<double> light_fog_alphas = {0.005, 0.01, 0.02, 0.03, 0.06};
    std::vector<double> dense_fog_alphas = {0.1, 0.12, 0.15, 0.2};
    double rain_rate = 0.5;
    double snow_rate = 0.5;
    double alpha_rain = 0.002;
    double alpha_snow = 0.004;
    double k_rain = 0.0005;
    double k_snow = 0.002;
    double noise_floor = 0.03;
    double beta_soft = 0.15;
    double r_min = 1.5;
    bool wet_ground = false;
    double wet_reflectance = 0.6;
    double wet_drop_prob = 0.3;
    bool scatter_keeps_label = false;  // default: scatter points get ignore
    bool remove_lost_points = true;

    // [data]
    std::string source_dir;
    std::string target_dir;
    std::string remap_file;
    int num_classes = 6;   // synthetic default: ids 0..5, 0 = ignore
    int ignore_id = 0;

    // [synth] desk-scale synthetic domain pair
    bool synth_enabled = true;
    int synth_count = 100;
    double synth_points_scale = 1.0;  // scales per-object point budgets

    void validate() const {
        auto fail = [](const std::string& msg) {
            throw std::runtime_error("config: " + msg);
        };
        if (warmup_epochs < 0 || stage1_epochs < 0 || stage2_epochs < 0)
            fail("epochs must be >= 0");
        if (batch_size < 1) fail("batch_size must be >= 1");
        if (learning_rate <= 0.0) fail("learning_rate must be > 0");
        if (ema_decay < 0.0 || ema_decay > 1.0) fail("ema_decay must be in [0,1]");
        auto check_frac = [&](double v, const char* name) {
            if (!(v > 0.0 && v <= 1.0))
                fail(std::string(name) + " must be in (0,1]");
        };
        check_frac(delta_rho_frac, "delta_rho_frac");
        check_frac(delta_z_frac, "delta_z_frac");
        check_frac(delta_i_frac, "delta_i_frac");
        if (!(delta_theta > 0.0 && delta_theta <= 2.0 * M_PI))
            fail("delta_theta must be in (0, 2*pi]");
        if (!(class_select_prob > 0.0 && class_select_prob < 1.0))
            fail("class_select_prob must be in (0,1)");
        if (w_clear < 0 || w_light_fog < 0 || w_dense_fog < 0 || w_rain < 0 ||
            w_snow < 0)
            fail("weather weights must be >= 0");
        if (num_classes < 2) fail("num_classes must be >= 2");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("config: bad boolean for " + key + ": '" + v + "'");
}

inline std::vector<double> parse_double_list(const std::string& v,
                                             const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw std::runtime_error("config: bad number in " + key + ": '" +
                                     item + "'");
        }
    }
    if (out.empty()) throw std::runtime_error("config: empty list for " + key);
    return out;
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        std::string key = section + "." + detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        auto num = [&]() {
            try {
                return std::stod(val);
            } catch (const std::exception&) {
                throw std::runtime_error("config: bad number for " + key + ": '" +
                                         val + "'");
            }
        };
        if (key == "run.seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(val));
        else if (key == "run.out_dir") cfg.out_dir = val;
        else if (key == "train.warmup_epochs") cfg.warmup_epochs = int(num());
        else if (key == "train.stage1_epochs") cfg.stage1_epochs = int(num());
        else if (key == "train.stage2_epochs") cfg.stage2_epochs = int(num());
        else if (key == "train.batch_size") cfg.batch_size = int(num());
        else if (key == "train.learning_rate") cfg.learning_rate = num();
        else if (key == "train.ema_decay") cfg.ema_decay = num();
        else if (key == "train.pseudo_label_threshold") cfg.pseudo_label_threshold = num();
        else if (key == "train.bridge_labels") {
            if (val == "teacher") cfg.bridge_labels = BridgeLabelSource::teacher;
            else if (val == "ground_truth") cfg.bridge_labels = BridgeLabelSource::ground_truth;
            else throw std::runtime_error("config: bad bridge_labels: '" + val + "'");
        }
        else if (key == "train.use_bridge") cfg.use_bridge = detail::parse_bool(val, key);
        else if (key == "train.regenerate_bridge") cfg.regenerate_bridge = detail::parse_bool(val, key);
        else if (key == "model.hidden1") cfg.hidden1 = int(num());
        else if (key == "model.hidden2") cfg.hidden2 = int(num());
        else if (key == "mix.delta_rho_frac") cfg.delta_rho_frac = num();
        else if (key == "mix.delta_theta") cfg.delta_theta = num();
        else if (key == "mix.delta_z_frac") cfg.delta_z_frac = num();
        else if (key == "mix.delta_i_frac") cfg.delta_i_frac = num();
        else if (key == "mix.class_select_prob") cfg.class_select_prob = num();
        else if (key == "mix.operator_policy") {
            if (val == "uniform") cfg.operator_policy = OperatorPolicy::uniform_choice;
            else if (val == "spatial") cfg.operator_policy = OperatorPolicy::fixed_spatial;
            else if (val == "intensity") cfg.operator_policy = OperatorPolicy::fixed_intensity;
            else if (val == "semantic") cfg.operator_policy = OperatorPolicy::fixed_semantic;
            else if (val == "compose_all") cfg.operator_policy = OperatorPolicy::compose_all;
            else throw std::runtime_error("config: bad operator_policy: '" + val + "'");
        }
        else if (key == "weather.w_clear") cfg.w_clear = num();
        else if (key == "weather.w_light_fog") cfg.w_light_fog = num();
        else if (key == "weather.w_dense_fog") cfg.w_dense_fog = num();
        else if (key == "weather.w_rain") cfg.w_rain = num();
        else if (key == "weather.w_snow") cfg.w_snow = num();
        else if (key == "weather.light_fog_alphas") cfg.light_fog_alphas = detail::parse_double_list(val, key);
        else if (key == "weather.dense_fog_alphas") cfg.dense_fog_alphas = detail::parse_double_list(val, key);
        else if (key == "weather.rain_rate") cfg.rain_rate = num();
        else if (key == "weather.snow_rate") cfg.snow_rate = num();
        else if (key == "weather.alpha_rain") cfg.alpha_rain = num();
        else if (key == "weather.alpha_snow") cfg.alpha_snow = num();
        else if (key == "weather.k_rain") cfg.k_rain = num();
        else if (key == "weather.k_snow") cfg.k_snow = num();
        else if (key == "weather.noise_floor") cfg.noise_floor = num();
        else if (key == "weather.beta_soft") cfg.beta_soft = num();
        else if (key == "weather.r_min") cfg.r_min = num();
        else if (key == "weather.wet_ground") cfg.wet_ground = detail::parse_bool(val, key);
        else if (key == "weather.wet_reflectance") cfg.wet_reflectance = num();
        else if (key == "weather.wet_drop_prob") cfg.wet_drop_prob = num();
        else if (key == "weather.scatter_keeps_label") cfg.scatter_keeps_label = detail::parse_bool(val, key);
        else if (key == "weather.remove_lost_points") cfg.remove_lost_points = detail::parse_bool(val, key);
        else if (key == "data.source_dir") cfg.source_dir = val;
        else if (key == "data.target_dir") cfg.target_dir = val;
        else if (key == "data.remap_file") cfg.remap_file = val;
        else if (key == "data.num_classes") cfg.num_classes = int(num());
        else if (key == "data.ignore_id") cfg.ignore_id = int(num());
        else if (key == "synth.enabled") cfg.synth_enabled = detail::parse_bool(val, key);
        else if (key == "synth.count") cfg.synth_count = int(num());
        else if (key == "synth.points_scale") cfg.synth_points_scale = num();
        else throw std::runtime_error("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

inline const char* to_string(OperatorPolicy p) {
    switch (p) {
        case OperatorPolicy::uniform_choice: return "uniform";
        case OperatorPolicy::fixed_spatial: return "spatial";
        case OperatorPolicy::fixed_intensity: return "intensity";
        case OperatorPolicy::fixed_semantic: return "semantic";
        case OperatorPolicy::compose_all: return "compose_all";
    }
    return "?";
}

// Resolved-config dump printed at the start of every run.
inline void print_config(const RunConfig& c, std::ostream& os) {
    os << "[run] seed=" << c.seed << " out_dir=" << c.out_dir << "\n"
       << "[train] warmup=" << c.warmup_epochs << " E1=" << c.stage1_epochs
       << " E2=" << c.stage2_epochs << " batch=" << c.batch_size
       << " lr=" << c.learning_rate << " ema=" << c.ema_decay
       << " threshold=" << c.pseudo_label_threshold << " bridge_labels="
       << (c.bridge_labels == BridgeLabelSource::teacher ? "teacher" : "ground_truth")
       << " use_bridge=" << (c.use_bridge ? "true" : "false") << "\n"
       << "[model] hidden=" << c.hidden1 << "," << c.hidden2 << "\n"
       << "[mix] drho=" << c.delta_rho_frac << " dtheta=" << c.delta_theta
       << " dz=" << c.delta_z_frac << " di=" << c.delta_i_frac
       << " class_p=" << c.class_select_prob
       << " policy=" << to_string(c.operator_policy) << "\n"
       << "[weather] w=(" << c.w_clear << "," << c.w_light_fog << ","
       << c.w_dense_fog << "," << c.w_rain << "," << c.w_snow << ")"
       << " noise_floor=" << c.noise_floor << " beta_soft=" << c.beta_soft
       << " r_min=" << c.r_min << "\n"
       << "[data] source=" << c.source_dir << " target=" << c.target_dir
       << " classes=" << c.num_classes << " ignore=" << c.ignore_id << "\n"
       << "[synth] enabled=" << (c.synth_enabled ? "true" : "false")
       << " count=" << c.synth_count << " points_scale=" << c.synth_points_scale
       << "\n";
}

}  // namespace unimix
