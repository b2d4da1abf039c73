#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpie/losses.hpp"
#include "fpie/models.hpp"
#include "fpie/train.hpp"

namespace fpie {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat `key = value` configuration with `#` comments. Every key must be in
/// the documented set; typos are hard errors.
class RunConfig {
public:
    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "seed",
            "threads",
            "deterministic",
            "data.root",
            "out.dir",
            "train.iterations",
            "train.batch_size",
            "train.checkpoint_every",
            "train.eval_every",
            "train.lr",
            "loss.content",
            "loss.texture",
            "loss.color",
            "loss.tv",
            "loss.tv_literal",
            "loss.content_squared",
            "loss.color_sigma_squared",
            "gen.variant",
            "gen.kernel",
            "gen.strided_kernel",
            "gen.base_channels",
            "gen.blocks",
            "gen.use_prelu",
            "gen.block_batch_norm",
            "disc.kernel",
            "disc.leaky_slope",
            "disc.channels",
            "disc.strides",
            "metrics.rgb_mean",
            "bench.repeats",
            "bench.width",
            "bench.height",
        };
        return keys;
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_keys().count(key)) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
        kv_[key] = value;
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    static RunConfig parse_text(const std::string& text) {
        RunConfig cfg;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const auto trim = [](std::string s) {
                const size_t a = s.find_first_not_of(" \t\r");
                if (a == std::string::npos) return std::string();
                const size_t b = s.find_last_not_of(" \t\r");
                return s.substr(a, b - a + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            const size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
            }
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    static RunConfig parse_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("config: cannot open '" + path + "'");
        std::ostringstream buf;
        buf << is.rdbuf();
        return parse_text(buf.str());
    }

    std::string get_string(const std::string& key, const std::string& dflt) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? dflt : it->second;
    }

    int64_t get_int(const std::string& key, int64_t dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            size_t pos = 0;
            const int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError("config: key '" + key + "' is not an integer: " + it->second);
        }
    }

    double get_float(const std::string& key, double dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError("config: key '" + key + "' is not a number: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError("config: key '" + key + "' is not a boolean: " + it->second);
    }

    std::vector<int64_t> get_int_list(const std::string& key, std::vector<int64_t> dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        std::vector<int64_t> out;
        std::istringstream is(it->second);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            try {
                out.push_back(std::stoll(tok));
            } catch (...) {
                throw ConfigError("config: key '" + key + "' is not a comma-separated int list");
            }
        }
        if (out.empty()) throw ConfigError("config: key '" + key + "' is empty");
        return out;
    }

    GeneratorConfig generator_config() const {
        const std::string variant = get_string("gen.variant", "strided");
        GeneratorConfig g;
        if (variant == "baseline") {
            g = GeneratorConfig::baseline(get_int("gen.kernel", 3), get_int("gen.base_channels", 64),
                                          get_int("gen.blocks", 4));
        } else if (variant == "strided") {
            g = GeneratorConfig::strided(get_int("gen.kernel", 3), get_int("gen.strided_kernel", 4),
                                         get_int("gen.base_channels", 16));
            g.blocks = get_int("gen.blocks", 2);
            g.max_channels = 4 * g.base_channels;
        } else {
            throw ConfigError("config: gen.variant must be 'baseline' or 'strided'");
        }
        g.use_prelu = get_bool("gen.use_prelu", false);
        g.block_batch_norm = get_bool("gen.block_batch_norm", true);
        g.validate();
        return g;
    }

    DiscriminatorConfig discriminator_config() const {
        DiscriminatorConfig d;
        d.kernel = get_int("disc.kernel", 4);
        d.leaky_slope = static_cast<float>(get_float("disc.leaky_slope", 0.2));
        d.channels = get_int_list("disc.channels", d.channels);
        d.strides = get_int_list("disc.strides", d.strides);
        d.validate();
        return d;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.iterations = get_int("train.iterations", 500);
        t.batch_size = get_int("train.batch_size", 8);
        t.checkpoint_every = get_int("train.checkpoint_every", 0);
        t.eval_every = get_int("train.eval_every", 0);
        t.adam.lr = static_cast<float>(get_float("train.lr", 5e-4));
        t.weights.content = static_cast<float>(get_float("loss.content", 1.0));
        t.weights.texture = static_cast<float>(get_float("loss.texture", 0.4));
        t.weights.color = static_cast<float>(get_float("loss.color", 0.1));
        t.weights.tv = static_cast<float>(get_float("loss.tv", 400.0));
        t.tv_literal = get_bool("loss.tv_literal", false);
        t.content_squared = get_bool("loss.content_squared", false);
        t.color_sigma_squared = get_bool("loss.color_sigma_squared", false);
        t.seed = static_cast<uint64_t>(get_int("seed", 1));
        t.gen = generator_config();
        t.disc = discriminator_config();
        t.out_dir = get_string("out.dir", "");
        return t;
    }

private:
    std::map<std::string, std::string> kv_;
};

} // namespace fpie
