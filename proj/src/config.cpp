#include "freqvit/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace freqvit {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// One schema entry: how to set the field from text and how to print it back.
struct Field {
    std::string name;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class Schema {
public:
    void add_int(const std::string& name, int* p) {
        fields_.push_back({name,
                           [name, p](const std::string& s) {
                               int v{};
                               auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
                               if (ec != std::errc{} || ptr != s.data() + s.size())
                                   throw ConfigError("bad integer for key " + name + ": " + s);
                               *p = v;
                           },
                           [p] { return std::to_string(*p); }});
    }
    void add_u64(const std::string& name, uint64_t* p) {
        fields_.push_back({name,
                           [name, p](const std::string& s) {
                               uint64_t v{};
                               auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
                               if (ec != std::errc{} || ptr != s.data() + s.size())
                                   throw ConfigError("bad integer for key " + name + ": " + s);
                               *p = v;
                           },
                           [p] { return std::to_string(*p); }});
    }
    void add_double(const std::string& name, double* p) {
        fields_.push_back({name,
                           [name, p](const std::string& s) {
                               try {
                                   size_t pos = 0;
                                   double v = std::stod(s, &pos);
                                   if (pos != s.size())
                                       throw ConfigError("bad real for key " + name + ": " + s);
                                   *p = v;
                               } catch (const std::invalid_argument&) {
                                   throw ConfigError("bad real for key " + name + ": " + s);
                               } catch (const std::out_of_range&) {
                                   throw ConfigError("bad real for key " + name + ": " + s);
                               }
                           },
                           [p] { return fmt_double(*p); }});
    }
    void add_bool(const std::string& name, bool* p) {
        fields_.push_back({name,
                           [name, p](const std::string& s) {
                               if (s == "true") *p = true;
                               else if (s == "false") *p = false;
                               else throw ConfigError("bad bool for key " + name +
                                                      " (want true/false): " + s);
                           },
                           [p] { return std::string(*p ? "true" : "false"); }});
    }
    void add_enum(const std::string& name, std::function<void(const std::string&)> set,
                  std::function<std::string()> get) {
        fields_.push_back({name, std::move(set), std::move(get)});
    }

    void apply(const std::vector<std::pair<std::string, std::string>>& entries) const {
        for (const auto& [key, value] : entries) {
            const Field* match = nullptr;
            for (const auto& f : fields_)
                if (f.name == key) {
                    match = &f;
                    break;
                }
            if (!match) throw ConfigError("unknown config key: " + key);
            match->set(value);
        }
    }

    std::string serialize() const {
        std::ostringstream out;
        for (const auto& f : fields_) out << f.name << " = " << f.get() << "\n";
        return out.str();
    }

private:
    std::vector<Field> fields_;
};

Schema make_schema(RunConfig& cfg) {
    Schema s;
    s.add_u64("seed", &cfg.seed);

    s.add_int("classes", &cfg.synth.classes);
    s.add_int("per_class_train", &cfg.synth.per_class_train);
    s.add_int("per_class_val", &cfg.synth.per_class_val);
    s.add_int("resolution", &cfg.synth.resolution);
    s.add_double("cue_mix", &cfg.synth.cue_mix);
    s.add_double("synth_noise_std", &cfg.synth.noise_std);

    s.add_int("patch", &cfg.encoder.patch);
    s.add_int("dim", &cfg.encoder.dim);
    s.add_int("depth", &cfg.encoder.depth);
    s.add_int("heads", &cfg.encoder.heads);
    s.add_int("prototypes", &cfg.encoder.prototypes);
    s.add_int("head_hidden", &cfg.encoder.head_hidden);
    s.add_int("channels", &cfg.encoder.channels);

    s.add_int("total_epochs", &cfg.curriculum.total_epochs);
    s.add_double("stage1_fraction", &cfg.curriculum.stage1_fraction);
    s.add_int("stage1_global_res", &cfg.curriculum.stage1_global_res);
    s.add_int("stage1_local_res", &cfg.curriculum.stage1_local_res);
    s.add_int("stage2_global_res", &cfg.curriculum.stage2_global_res);
    s.add_int("stage2_local_res", &cfg.curriculum.stage2_local_res);
    s.add_int("n_local_crops", &cfg.curriculum.n_local_crops);
    s.add_double("global_crop_min_scale", &cfg.curriculum.global_crop_min_scale);
    s.add_double("global_crop_max_scale", &cfg.curriculum.global_crop_max_scale);
    s.add_double("local_crop_min_scale", &cfg.curriculum.local_crop_min_scale);
    s.add_double("local_crop_max_scale", &cfg.curriculum.local_crop_max_scale);
    s.add_bool("gp_enabled_stage2", &cfg.curriculum.gp_enabled_stage2);
    s.add_double("gp_side_fraction", &cfg.curriculum.gp_cfg.side_fraction);
    s.add_double("gp_scale", &cfg.curriculum.gp_cfg.scale);
    s.add_double("gp_probability", &cfg.curriculum.gp_cfg.probability);
    s.add_enum(
        "gp_mode",
        [&cfg](const std::string& v) {
            if (v == "multiply") cfg.curriculum.gp_cfg.mode = augment::PatchMode::kMultiply;
            else if (v == "replace") cfg.curriculum.gp_cfg.mode = augment::PatchMode::kReplace;
            else throw ConfigError("bad gp_mode (want multiply/replace): " + v);
        },
        [&cfg] {
            return std::string(cfg.curriculum.gp_cfg.mode == augment::PatchMode::kMultiply
                                   ? "multiply"
                                   : "replace");
        });
    s.add_bool("gp_globals_only", &cfg.curriculum.gp_globals_only);
    s.add_int("batch_size", &cfg.curriculum.batch_size);
    s.add_bool("allow_batch_size_override", &cfg.curriculum.allow_batch_size_override);
    s.add_int("stage1_batch_size", &cfg.curriculum.stage1_batch_size);
    s.add_enum(
        "lr_rule",
        [&cfg](const std::string& v) { cfg.curriculum.lr_rule = curriculum::lr_rule_from_name(v); },
        [&cfg] { return std::string(curriculum::lr_rule_name(cfg.curriculum.lr_rule)); });
    s.add_double("lr_ref", &cfg.curriculum.lr_ref);
    s.add_int("lr_ref_batch", &cfg.curriculum.lr_ref_batch);
    s.add_int("warmup_epochs", &cfg.curriculum.warmup_epochs);
    s.add_double("min_lr", &cfg.curriculum.min_lr);
    s.add_double("weight_decay", &cfg.curriculum.weight_decay);
    s.add_int("freeze_prototypes_epochs", &cfg.curriculum.freeze_prototypes_epochs);
    s.add_double("grad_clip", &cfg.curriculum.grad_clip);
    s.add_bool("reset_optimizer_on_transition", &cfg.curriculum.reset_optimizer_on_transition);
    s.add_bool("reset_lr_schedule_on_transition",
               &cfg.curriculum.reset_lr_schedule_on_transition);
    s.add_bool("reset_ema_schedule_on_transition",
               &cfg.curriculum.reset_ema_schedule_on_transition);

    s.add_double("student_temp", &cfg.loss.student_temp);
    s.add_double("teacher_temp", &cfg.loss.teacher_temp);
    s.add_double("center_momentum", &cfg.loss.center_momentum);
    s.add_double("ema_momentum_start", &cfg.loss.ema_momentum_start);
    s.add_double("ema_momentum_end", &cfg.loss.ema_momentum_end);

    s.add_int("probe_iters", &cfg.eval.probe_iters);
    s.add_int("probe_batch", &cfg.eval.probe_batch);
    s.add_double("probe_lr", &cfg.eval.probe_lr);
    s.add_double("heatmap_v", &cfg.eval.heatmap_v);
    s.add_int("heatmap_images_per_class", &cfg.eval.heatmap_images_per_class);
    return s;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        for (const auto& [k, v] : entries)
            if (k == key) throw ConfigError("duplicate config key: " + key);
        entries.emplace_back(key, value);
    }
    return entries;
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    Schema schema = make_schema(cfg);
    schema.apply(parse_key_values(text));
    validate(cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
    RunConfig copy = cfg;
    return make_schema(copy).serialize();
}

uint64_t config_hash(const RunConfig& cfg) {
    return fnv1a64_str(serialize_run_config(cfg));
}

void validate(const RunConfig& cfg) {
    datagen::validate(cfg.synth);
    ssl::validate(cfg.encoder);
    curriculum::validate(cfg.curriculum);
    ssl::validate(cfg.loss);
    if (cfg.eval.probe_iters < 1 || cfg.eval.probe_batch < 1)
        throw ConfigError("probe_iters and probe_batch must be >= 1");
    if (cfg.eval.probe_lr <= 0.0) throw ConfigError("probe_lr must be > 0");
    if (cfg.eval.heatmap_images_per_class < 1)
        throw ConfigError("heatmap_images_per_class must be >= 1");
}

}  // namespace freqvit
