#include "sll/experiment/config.hpp"

#include <cstdio>
#include <fstream>

namespace sll::experiment {
namespace {

using nlohmann::json;

const json& empty_object() {
    static const json e = json::object();
    return e;
}

// Strict reader over one JSON object: every key must be consumed.
class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) fail("", "expected an object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        const std::string where = key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key);
        throw ConfigError((where.empty() ? std::string("config") : where) + ": " + what);
    }

    const json* find(const char* key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void read(const char* key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) fail(key, "expected true or false");
            out = v->get<bool>();
        }
    }
    void read(const char* key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) fail(key, "expected a number");
            out = v->get<double>();
        }
    }
    void read(const char* key, std::size_t& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0))
                fail(key, "expected a non-negative integer");
            out = v->get<std::size_t>();
        }
    }
    void read(const char* key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) fail(key, "expected a string");
            out = v->get<std::string>();
        }
    }
    template <typename E, typename F>
    void read_enum(const char* key, E& out, F parse) {
        std::string name;
        read(key, name);
        if (name.empty()) return;
        try {
            out = parse(name);
        } catch (const std::invalid_argument&) {
            fail(key, "unknown value \"" + name + "\"");
        }
    }

    Reader section(const char* key) {
        const json* v = find(key);
        return Reader(v ? *v : empty_object(), path_.empty() ? key : path_ + "." + key);
    }

    void finish() const {
        for (const auto& [k, v] : obj_.items())
            if (!seen_.count(k)) fail(k, "unknown key");
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_dataset(Reader r, DatasetSection& d) {
    r.read("source", d.source);
    r.read("path", d.path);
    r.read("image_size", d.image_size);
    r.read("num_classes", d.num_classes);
    r.read("private_size", d.private_size);
    r.read("aux_size", d.aux_size);
    r.read("test_size", d.test_size);
    if (const json* v = r.find("aux_categories")) {
        if (v->is_string()) {
            d.aux_categories_name = v->get<std::string>();
            if (d.aux_categories_name == "all")
                d.aux_categories.clear();
            else if (d.aux_categories_name == "living")
                d.aux_categories = data::living_classes();
            else if (d.aux_categories_name == "non_living")
                d.aux_categories = data::non_living_classes();
            else
                r.fail("aux_categories", "expected all, living, non_living or a label list");
        } else if (v->is_array()) {
            d.aux_categories.clear();
            for (const auto& e : *v) {
                if (!e.is_number_integer()) r.fail("aux_categories", "labels must be integers");
                d.aux_categories.insert(e.get<int>());
            }
            if (d.aux_categories.empty()) r.fail("aux_categories", "label list is empty");
            d.aux_categories_name = "custom";
        } else {
            r.fail("aux_categories", "expected a string or a label list");
        }
    }
    r.read("aux_domain_shift", d.aux_domain_shift);
    r.read("color_jitter", d.color_jitter);
    r.read("position_jitter", d.position_jitter);
    r.read("background_noise", d.background_noise);
    r.finish();
}

void read_model(Reader r, ModelSection& m) {
    r.read("split_point", m.split_point);
    r.read_enum("topology", m.topology, protocol::topology_from_string);
    r.read_enum("substitute_family", m.substitute_family, block_family_from_string);
    r.finish();
}

void read_attack(Reader r, AttackSection& a) {
    r.read("enabled", a.enabled);
    r.read("no_mkmmd", a.no_mkmmd);
    r.read("no_disc", a.no_disc);
    r.read("train_substitute", a.train_substitute);
    r.read("saturating_disc", a.saturating_disc);
    r.read_enum("disc_objective", a.disc_objective, attack::disc_objective_from_string);
    r.read("disc_weight", a.disc_weight);
    r.read("mmd_weight", a.mmd_weight);
    r.read("kernel_count", a.kernel_count);
    r.read("disc_steps", a.disc_steps);
    r.read("substitute_steps", a.substitute_steps);
    r.read("aux_batch", a.aux_batch);
    r.read("priv_window", a.priv_window);
    r.read("inverse_epochs", a.inverse_epochs);
    r.read("inverse_batch", a.inverse_batch);
    r.read("disc_width", a.disc_width);
    r.read("inverse_width", a.inverse_width);
    r.read("substitute_lr", a.substitute_lr);
    r.read("disc_lr", a.disc_lr);
    r.read("inverse_lr", a.inverse_lr);
    r.finish();
}

void read_defense(Reader r, defense::DefenseConfig& d) {
    r.read_enum("kind", d.kind, defense::defense_kind_from_string);
    r.read("alpha", d.alpha);
    r.read("clip", d.clip);
    r.read("laplace_scale", d.laplace_scale);
    r.read("sigma", d.sigma);
    r.finish();
}

void read_detection(Reader r, DetectionSection& d) {
    r.read("enabled", d.enabled);
    r.read("warmup", d.gs.warmup);
    r.read("window", d.gs.window);
    r.read("tau", d.gs.tau);
    r.read("lambda", d.gs.lambda);
    r.finish();
}

void read_run(Reader r, RunSection& s) {
    r.read("seed", s.seed);
    r.read("epochs", s.epochs);
    r.read("max_iterations", s.max_iterations);
    r.read("batch_size", s.batch_size);
    r.read_enum("precision", s.precision, wire_precision_from_string);
    r.read_enum("transport", s.transport, protocol::transport_kind_from_string);
    r.read("threaded", s.threaded);
    r.read_enum("server_behavior", s.server_behavior, protocol::server_behavior_from_string);
    r.read_enum("optimizer", s.optimizer, nn::optimizer_kind_from_string);
    r.read("learning_rate", s.learning_rate);
    r.read("grid_images", s.grid_images);
    r.read("grid_columns", s.grid_columns);
    r.read("checkpoints", s.checkpoints);
    r.read("output_dir", s.output_dir);
    r.finish();
}

SweepSection read_sweep(Reader r) {
    SweepSection s;
    r.read("axis", s.axis);
    if (s.axis.empty()) r.fail("axis", "required");
    if (const json* v = r.find("values")) {
        if (!v->is_array()) r.fail("values", "expected a list");
        s.values.assign(v->begin(), v->end());
    }
    r.read("offset_seeds", s.offset_seeds);
    r.finish();
    return s;
}

void check(bool ok, const char* path, const std::string& what) {
    if (!ok) throw ConfigError(std::string(path) + ": " + what);
}

}  // namespace

std::string to_string(protocol::WirePrecision p) { return p == protocol::WirePrecision::fp64 ? "fp64" : "fp32"; }

protocol::WirePrecision wire_precision_from_string(const std::string& name) {
    if (name == "fp32") return protocol::WirePrecision::fp32;
    if (name == "fp64") return protocol::WirePrecision::fp64;
    throw std::invalid_argument("unknown precision: " + name);
}

attack::AttackConfig AttackSection::to_attack_config() const {
    attack::AttackConfig c;
    c.substitute_optimizer.learning_rate = substitute_lr;
    c.disc_optimizer.learning_rate = disc_lr;
    c.inverse_optimizer.learning_rate = inverse_lr;
    c.disc_weight = disc_weight;
    c.mmd_weight = mmd_weight;
    c.kernel_count = kernel_count;
    c.disc_steps = disc_steps;
    c.substitute_steps = substitute_steps;
    c.aux_batch = aux_batch;
    c.priv_window = priv_window;
    c.inverse_epochs = inverse_epochs;
    c.inverse_batch = inverse_batch;
    c.flags = {no_mkmmd, no_disc};
    c.saturating_disc = saturating_disc;
    c.disc_objective = disc_objective;
    c.train_substitute = train_substitute;
    return c;
}

void ExperimentConfig::validate() const {
    const auto& d = dataset;
    check(d.source == "synthetic" || d.source == "cifar10", "dataset.source", "expected synthetic or cifar10");
    check(d.source != "cifar10" || !d.path.empty(), "dataset.path", "required for cifar10");
    check(d.source != "cifar10" || !d.aux_domain_shift, "dataset.aux_domain_shift", "only the synthetic generator has a shifted domain");
    check(d.image_size == 16 || d.image_size == 32, "dataset.image_size", "must be 16 or 32");
    if (d.source == "synthetic") check(d.num_classes >= 2 && d.num_classes <= 4, "dataset.num_classes", "must be 2..4");
    check(d.private_size >= 2, "dataset.private_size", "must be at least 2");
    check(!attack.enabled || d.aux_size >= attack.aux_batch, "dataset.aux_size", "smaller than attack.aux_batch");
    for (int c : d.aux_categories)
        check(c >= 0 && static_cast<std::size_t>(c) < (d.source == "cifar10" ? 10 : d.num_classes),
              "dataset.aux_categories", "label out of range");
    check(d.color_jitter >= 0 && d.position_jitter >= 0 && d.background_noise >= 0, "dataset",
          "render parameters must be >= 0");

    check(model.split_point >= 1 && model.split_point <= kSplitPoints, "model.split_point", "must be 1..4");

    if (attack.enabled) {
        check(attack.substitute_lr > 0 && attack.disc_lr > 0 && attack.inverse_lr > 0, "attack", "learning rates must be positive");
        check(attack.disc_width > 0 && attack.inverse_width > 0, "attack", "widths must be positive");
        check(attack.priv_window > 0, "attack.priv_window", "must be positive");
        try {
            attack.to_attack_config().validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    try {
        defense.validate();
        detection.gs.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    check(run.epochs >= 1, "run.epochs", "must be at least 1");
    check(run.batch_size >= 1, "run.batch_size", "must be at least 1");
    check(run.learning_rate > 0, "run.learning_rate", "must be positive");
    check(run.grid_columns >= 1, "run.grid_columns", "must be at least 1");
}

nlohmann::json ExperimentConfig::to_json() const {
    json categories = dataset.aux_categories_name == "custom"
                          ? json(std::vector<int>(dataset.aux_categories.begin(), dataset.aux_categories.end()))
                          : json(dataset.aux_categories_name);
    json j;
    j["name"] = name;
    j["dataset"] = {{"source", dataset.source},
                    {"path", dataset.path},
                    {"image_size", dataset.image_size},
                    {"num_classes", dataset.num_classes},
                    {"private_size", dataset.private_size},
                    {"aux_size", dataset.aux_size},
                    {"test_size", dataset.test_size},
                    {"aux_categories", categories},
                    {"aux_domain_shift", dataset.aux_domain_shift},
                    {"color_jitter", dataset.color_jitter},
                    {"position_jitter", dataset.position_jitter},
                    {"background_noise", dataset.background_noise}};
    j["model"] = {{"split_point", model.split_point},
                  {"topology", protocol::to_string(model.topology)},
                  {"substitute_family", to_string(model.substitute_family)}};
    j["attack"] = {{"enabled", attack.enabled},
                   {"no_mkmmd", attack.no_mkmmd},
                   {"no_disc", attack.no_disc},
                   {"train_substitute", attack.train_substitute},
                   {"saturating_disc", attack.saturating_disc},
                   {"disc_objective", attack::to_string(attack.disc_objective)},
                   {"disc_weight", attack.disc_weight},
                   {"mmd_weight", attack.mmd_weight},
                   {"kernel_count", attack.kernel_count},
                   {"disc_steps", attack.disc_steps},
                   {"substitute_steps", attack.substitute_steps},
                   {"aux_batch", attack.aux_batch},
                   {"priv_window", attack.priv_window},
                   {"inverse_epochs", attack.inverse_epochs},
                   {"inverse_batch", attack.inverse_batch},
                   {"disc_width", attack.disc_width},
                   {"inverse_width", attack.inverse_width},
                   {"substitute_lr", attack.substitute_lr},
                   {"disc_lr", attack.disc_lr},
                   {"inverse_lr", attack.inverse_lr}};
    j["defense"] = {{"kind", defense::to_string(defense.kind)},
                    {"alpha", defense.alpha},
                    {"clip", defense.clip},
                    {"laplace_scale", defense.laplace_scale},
                    {"sigma", defense.sigma}};
    j["detection"] = {{"enabled", detection.enabled},
                      {"warmup", detection.gs.warmup},
                      {"window", detection.gs.window},
                      {"tau", detection.gs.tau},
                      {"lambda", detection.gs.lambda}};
    j["run"] = {{"seed", run.seed},
                {"epochs", run.epochs},
                {"max_iterations", run.max_iterations},
                {"batch_size", run.batch_size},
                {"precision", to_string(run.precision)},
                {"transport", protocol::to_string(run.transport)},
                {"threaded", run.threaded},
                {"server_behavior", protocol::to_string(run.server_behavior)},
                {"optimizer", nn::to_string(run.optimizer)},
                {"learning_rate", run.learning_rate},
                {"grid_images", run.grid_images},
                {"grid_columns", run.grid_columns},
                {"checkpoints", run.checkpoints},
                {"output_dir", run.output_dir}};
    if (sweep) j["sweep"] = {{"axis", sweep->axis}, {"values", sweep->values}, {"offset_seeds", sweep->offset_seeds}};
    return j;
}

std::string ExperimentConfig::hash() const {
    json j = to_json();
    j["run"].erase("output_dir");
    j.erase("sweep");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(nn::stream_id(j.dump().c_str())));
    return buf;
}

ExperimentConfig parse_config(const nlohmann::json& doc) {
    ExperimentConfig cfg;
    Reader r(doc, "");
    r.read("name", cfg.name);
    read_dataset(r.section("dataset"), cfg.dataset);
    read_model(r.section("model"), cfg.model);
    read_attack(r.section("attack"), cfg.attack);
    read_defense(r.section("defense"), cfg.defense);
    read_detection(r.section("detection"), cfg.detection);
    read_run(r.section("run"), cfg.run);
    if (doc.contains("sweep")) cfg.sweep = read_sweep(r.section("sweep"));
    r.finish();
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(doc);
}

void set_path(nlohmann::json& doc, const std::string& dotted, const nlohmann::json& value) {
    if (dotted.empty()) throw ConfigError("empty config path");
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("malformed config path: " + dotted);
        if (dot == std::string::npos) {
            if (!node->is_object()) throw ConfigError("config path does not name a section: " + dotted);
            // An object value merges into an existing section.
            if (value.is_object() && node->contains(key) && (*node)[key].is_object())
                (*node)[key].merge_patch(value);
            else
                (*node)[key] = value;
            return;
        }
        if (!node->is_object()) throw ConfigError("config path does not name a section: " + dotted);
        if (!node->contains(key)) (*node)[key] = json::object();
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace sll::experiment
