#include "thzdiff/config.hpp"

#include "thzdiff/errors.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace thz {

namespace {

using nlohmann::json;

// Reads keys from one JSON object and rejects anything it was not asked about.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            if (!used_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
        }
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        used_.insert(key);
        auto it = node_.find(key);
        return it == node_.end() ? nullptr : &*it;
    }

    void number(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) throw ConfigError(field(key), "expected a number");
            out = v->get<double>();
        }
    }

    template <typename Int>
    void integer(const std::string& key, Int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
            if (v->is_number_unsigned()) {
                out = static_cast<Int>(v->get<std::uint64_t>());
            } else {
                const auto x = v->get<std::int64_t>();
                if (std::is_unsigned_v<Int> && x < 0) throw ConfigError(field(key), "must be non-negative");
                out = static_cast<Int>(x);
            }
        }
    }

    void vec3(const std::string& key, Vec3& out) {
        if (const json* v = find(key)) {
            if (!v->is_array() || v->size() != 3) throw ConfigError(field(key), "expected an array of 3 numbers");
            for (int i = 0; i < 3; ++i) {
                if (!(*v)[i].is_number()) throw ConfigError(field(key), "expected an array of 3 numbers");
                out[i] = (*v)[i].get<double>();
            }
        }
    }

    void string(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(field(key), "expected a string");
            out = v->get<std::string>();
        }
    }

    template <typename Fn>
    void child(const std::string& key, Fn&& fn) {
        if (const json* v = find(key)) {
            Section s(*v, field(key));
            fn(s);
        }
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> used_;
};

// Re-throws a library validation error under a config field path.
template <typename Fn>
void check(const std::string& field, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(field, e.what());
    }
}

}  // namespace

void RunConfig::validate() const {
    const ArrayLayout& g = geometry;
    if (!(g.carrier_frequency > 0.0)) throw ConfigError("geometry.carrier_frequency_hz", "must be positive");
    if (g.n_tx < 1) throw ConfigError("geometry.n_tx", "must be >= 1");
    if (g.n_rx < 1) throw ConfigError("geometry.n_rx", "must be >= 1");
    if (g.k_tx < 1 || g.n_tx % g.k_tx != 0) {
        throw ConfigError("geometry.k_tx", "must divide n_tx (" + std::to_string(g.n_tx) + "), got " + std::to_string(g.k_tx));
    }
    if (g.k_rx < 1 || g.n_rx % g.k_rx != 0) {
        throw ConfigError("geometry.k_rx", "must divide n_rx (" + std::to_string(g.n_rx) + "), got " + std::to_string(g.k_rx));
    }
    check("geometry", [&] { ArrayGeometry probe(g); });
    check("gscm", [&] { gscm.validate(); });
    check("region", [&] { region.validate(); });
    check("dit", [&] { dit.validate(); });
    if (dit.n_rx != g.n_rx || dit.n_tx != g.n_tx) throw ConfigError("dit", "input dims must follow geometry.n_rx/n_tx");
    check("schedule", [&] { schedule.validate(); });
    check("training", [&] { training.validate(); });
    if (!(split.test_fraction > 0.0 && split.test_fraction < 1.0)) {
        throw ConfigError("split.test_fraction", "must lie in (0, 1)");
    }
    if (!(split.cell_edge > 0.0)) throw ConfigError("split.cell_edge", "must be positive");
}

RunConfig parse_run_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    RunConfig cfg;
    double intra_wl = 0.5, inter_wl = 0.0;
    {
        Section s(root, "");
        s.child("geometry", [&](Section& g) {
            g.number("carrier_frequency_hz", cfg.geometry.carrier_frequency);
            g.integer("n_tx", cfg.geometry.n_tx);
            g.integer("n_rx", cfg.geometry.n_rx);
            g.integer("k_tx", cfg.geometry.k_tx);
            g.integer("k_rx", cfg.geometry.k_rx);
            g.number("intra_spacing_wavelengths", intra_wl);
            g.number("inter_spacing_wavelengths", inter_wl);
            g.vec3("tx_origin", cfg.geometry.tx_origin);
            g.vec3("array_axis", cfg.geometry.array_axis);
        });
        s.child("gscm", [&](Section& g) {
            g.integer("n_clusters", cfg.gscm.n_clusters);
            g.integer("rays_per_cluster", cfg.gscm.rays_per_cluster);
            g.number("k_factor_mean_db", cfg.gscm.k_factor_mean_db);
            g.number("k_factor_std_db", cfg.gscm.k_factor_std_db);
            g.number("azimuth_spread", cfg.gscm.azimuth_spread);
            g.number("elevation_spread", cfg.gscm.elevation_spread);
            g.number("path_loss_exponent", cfg.gscm.path_loss_exponent);
            g.number("scatterer_radius_min", cfg.gscm.scatterer_radius_min);
            g.number("scatterer_radius_max", cfg.gscm.scatterer_radius_max);
        });
        s.child("region", [&](Section& r) {
            r.vec3("lo", cfg.region.lo);
            r.vec3("hi", cfg.region.hi);
        });
        s.child("dit", [&](Section& d) {
            d.integer("patch_size", cfg.dit.patch_size);
            d.integer("embed_dim", cfg.dit.embed_dim);
            d.integer("depth", cfg.dit.depth);
            d.integer("n_heads", cfg.dit.n_heads);
            d.number("mlp_ratio", cfg.dit.mlp_ratio);
            d.number("sigma_data", cfg.dit.sigma_data);
        });
        s.child("schedule", [&](Section& d) {
            d.number("horizon", cfg.schedule.horizon);
            d.number("sigma_min", cfg.schedule.sigma_min);
            d.integer("n_steps", cfg.schedule.n_steps);
        });
        s.child("training", [&](Section& t) {
            t.integer("epochs", cfg.training.epochs);
            t.integer("batch_size", cfg.training.batch_size);
            t.number("lr", cfg.training.adam.lr);
            t.number("beta1", cfg.training.adam.beta1);
            t.number("beta2", cfg.training.adam.beta2);
            t.number("epsilon", cfg.training.adam.epsilon);
            t.number("ema_decay", cfg.training.ema_decay);
        });
        s.child("split", [&](Section& t) {
            t.number("test_fraction", cfg.split.test_fraction);
            t.number("cell_edge", cfg.split.cell_edge);
        });
        s.child("paths", [&](Section& p) {
            p.string("data", cfg.paths.data);
            p.string("checkpoint", cfg.paths.checkpoint);
        });
        s.integer("seed", cfg.seed);
    }
    if (!(intra_wl > 0.0)) throw ConfigError("geometry.intra_spacing_wavelengths", "must be positive");
    if (!(inter_wl >= 0.0)) throw ConfigError("geometry.inter_spacing_wavelengths", "must be non-negative");
    if (cfg.geometry.carrier_frequency > 0.0) {
        const double wl = kSpeedOfLight / cfg.geometry.carrier_frequency;
        cfg.geometry.intra_spacing = intra_wl * wl;
        cfg.geometry.inter_spacing = inter_wl * wl;  // 0 keeps the geometry default
    }
    if (cfg.geometry.array_axis.norm() > 0.0) cfg.geometry.array_axis.normalize();
    cfg.dit.n_rx = cfg.geometry.n_rx;
    cfg.dit.n_tx = cfg.geometry.n_tx;
    cfg.training.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& c) {
    const double wl = kSpeedOfLight / c.geometry.carrier_frequency;
    auto v3 = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
    json j;
    j["geometry"] = {{"carrier_frequency_hz", c.geometry.carrier_frequency},
                     {"n_tx", c.geometry.n_tx},
                     {"n_rx", c.geometry.n_rx},
                     {"k_tx", c.geometry.k_tx},
                     {"k_rx", c.geometry.k_rx},
                     {"intra_spacing_wavelengths", c.geometry.intra_spacing > 0.0 ? c.geometry.intra_spacing / wl : 0.5},
                     {"inter_spacing_wavelengths", c.geometry.inter_spacing / wl},
                     {"tx_origin", v3(c.geometry.tx_origin)},
                     {"array_axis", v3(c.geometry.array_axis)}};
    j["gscm"] = {{"n_clusters", c.gscm.n_clusters},
                 {"rays_per_cluster", c.gscm.rays_per_cluster},
                 {"k_factor_mean_db", c.gscm.k_factor_mean_db},
                 {"k_factor_std_db", c.gscm.k_factor_std_db},
                 {"azimuth_spread", c.gscm.azimuth_spread},
                 {"elevation_spread", c.gscm.elevation_spread},
                 {"path_loss_exponent", c.gscm.path_loss_exponent},
                 {"scatterer_radius_min", c.gscm.scatterer_radius_min},
                 {"scatterer_radius_max", c.gscm.scatterer_radius_max}};
    j["region"] = {{"lo", v3(c.region.lo)}, {"hi", v3(c.region.hi)}};
    j["dit"] = {{"patch_size", c.dit.patch_size}, {"embed_dim", c.dit.embed_dim}, {"depth", c.dit.depth},
                {"n_heads", c.dit.n_heads},       {"mlp_ratio", c.dit.mlp_ratio}, {"sigma_data", c.dit.sigma_data}};
    j["schedule"] = {{"horizon", c.schedule.horizon}, {"sigma_min", c.schedule.sigma_min}, {"n_steps", c.schedule.n_steps}};
    j["training"] = {{"epochs", c.training.epochs},       {"batch_size", c.training.batch_size},
                     {"lr", c.training.adam.lr},          {"beta1", c.training.adam.beta1},
                     {"beta2", c.training.adam.beta2},    {"epsilon", c.training.adam.epsilon},
                     {"ema_decay", c.training.ema_decay}};
    j["split"] = {{"test_fraction", c.split.test_fraction}, {"cell_edge", c.split.cell_edge}};
    j["paths"] = {{"data", c.paths.data}, {"checkpoint", c.paths.checkpoint}};
    j["seed"] = c.seed;
    return j.dump(2);
}

}  // namespace thz
