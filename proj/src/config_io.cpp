#include "tednet/config_io.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace tednet {

RunConfig preset_config(Preset preset) {
    RunConfig cfg;
    if (preset == Preset::kPaper) {
        cfg.model = default_config();
        cfg.train = paper_train_config();
        cfg.phantom.side = 128;
        cfg.phantom.image_count = 8;
    } else {
        cfg.model = desk_config();
        cfg.train = desk_train_config();
        cfg.phantom.side = 64;
        cfg.phantom.image_count = 8;
    }
    return cfg;
}

Preset parse_preset(const std::string& name) {
    if (name == "paper") return Preset::kPaper;
    if (name == "desk") return Preset::kDesk;
    throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
}

namespace {

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const int r = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + ": cannot parse integer from '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + ": cannot parse number from '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long r = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + ": cannot parse unsigned integer from '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("config: " + key + ": cannot parse boolean from '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["patch_side"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.patch_side = to_int(k, v);
            c.train.patch_side = c.model.patch_side;
        };
        t["embed_dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.embed_dim = to_int(k, v);
        };
        t["heads"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.heads = to_int(k, v);
        };
        t["mlp_ratio"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.mlp_ratio = to_int(k, v);
        };
        t["shift_pixels"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.shift_pixels = to_int(k, v);
        };
        t["residual_sign"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.residual_sign = to_int(k, v);
        };
        t["activation"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "gelu")
                c.model.activation = Activation::kGelu;
            else if (v == "relu")
                c.model.activation = Activation::kRelu;
            else
                throw ConfigError("config: " + k + ": expected gelu or relu, got '" + v + "'");
        };
        t["use_positional"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.use_positional = to_bool(k, v);
        };
        t["literal_eq3"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.literal_eq3 = to_bool(k, v);
        };
        t["token_skips"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.token_skips = to_bool(k, v);
        };
        for (int s = 0; s < 3; ++s) {
            const std::string p = "stage" + std::to_string(s + 1) + "_";
            t[p + "kernel"] = [s](RunConfig& c, const std::string& k, const std::string& v) {
                c.model.stages[s].kernel = to_int(k, v);
            };
            t[p + "stride"] = [s](RunConfig& c, const std::string& k, const std::string& v) {
                c.model.stages[s].stride = to_int(k, v);
            };
            t[p + "dilation"] = [s](RunConfig& c, const std::string& k, const std::string& v) {
                c.model.stages[s].dilation = to_int(k, v);
            };
            t[p + "padding"] = [s](RunConfig& c, const std::string& k, const std::string& v) {
                c.model.stages[s].padding = to_int(k, v);
            };
        }
        t["learning_rate"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.learning_rate = to_double(k, v);
        };
        t["beta1"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.beta1 = to_double(k, v);
        };
        t["beta2"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.beta2 = to_double(k, v);
        };
        t["eps_adam"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.eps_adam = to_double(k, v);
        };
        t["epochs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.epochs = to_int(k, v);
        };
        t["batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.batch_size = to_int(k, v);
        };
        t["patches_per_image"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.patches_per_image = to_int(k, v);
        };
        t["augment"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.augment = to_bool(k, v);
        };
        t["augment_duplicate"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.augment_duplicate = to_bool(k, v);
        };
        t["max_steps"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.max_steps = to_int(k, v);
        };
        t["early_stop_fraction"] = [](RunConfig& c, const std::string& k,
                                      const std::string& v) {
            c.train.early_stop_fraction = to_double(k, v);
        };
        t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.seed = to_u64(k, v);
            c.phantom.seed = c.train.seed;
        };
        t["phantom_side"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.phantom.side = to_int(k, v);
        };
        t["image_count"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.phantom.image_count = to_int(k, v);
        };
        t["min_ellipses"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.phantom.min_ellipses = to_int(k, v);
        };
        t["max_ellipses"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.phantom.max_ellipses = to_int(k, v);
        };
        t["min_intensity"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.phantom.min_intensity = to_double(k, v);
        };
        t["max_intensity"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.phantom.max_intensity = to_double(k, v);
        };
        t["noise_sigma"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.phantom.noise_sigma = to_double(k, v);
        };
        t["dose_scale"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.phantom.dose_scale = to_double(k, v);
        };
        return t;
    }();

    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
}

RunConfig load_run_config(Preset preset, const std::string& config_path) {
    RunConfig cfg = preset_config(preset);
    if (config_path.empty()) return cfg;
    std::ifstream in(config_path);
    if (!in) throw ConfigError("config: cannot open '" + config_path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + config_path + ":" + std::to_string(lineno) +
                              ": expected key=value");
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

}  // namespace tednet
