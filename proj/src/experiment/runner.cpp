#include "sll/experiment/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "sll/nn/archive.hpp"

namespace sll::experiment {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

data::SyntheticSpec synthetic_spec(const DatasetSection& d, bool shifted) {
    data::SyntheticSpec s;
    s.image_size = d.image_size;
    s.num_classes = d.num_classes;
    s.color_jitter = d.color_jitter;
    s.position_jitter = d.position_jitter;
    s.background_noise = d.background_noise;
    s.domain_shift = shifted;
    return s;
}

data::ImageDataset limit(data::ImageDataset ds, std::size_t n, nn::Rng& rng) {
    return ds.size() > n ? data::subsample(ds, n, rng) : ds;
}

nn::OptimizerConfig optimizer(const RunSection& r) {
    nn::OptimizerConfig c;
    c.kind = r.optimizer;
    c.learning_rate = r.learning_rate;
    if (c.kind == nn::OptimizerKind::sgd_momentum) c.momentum = 0.9;
    return c;
}

nn::Tensor first_images(const nn::Tensor& images, std::size_t n) {
    return images.slice_batch(0, std::min(n, images.batch()));
}

void save_network(nn::Network& net, const fs::path& path) {
    const auto state = nn::network_state(net);
    nn::save_archive(path, state);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string value_label(const json& v) {
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') c = '_';
    return s.size() > 48 ? s.substr(0, 48) : s;
}

std::string csv_field(std::string s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

ExperimentData make_data(const ExperimentConfig& cfg) {
    const auto& d = cfg.dataset;
    const std::uint64_t seed = cfg.run.seed;
    ExperimentData out;
    if (d.source == "synthetic") {
        nn::Rng prng(seed, nn::stream_id("data_private"));
        out.priv = data::gen_synthetic(synthetic_spec(d, false), d.private_size, prng);
        nn::Rng arng(seed, nn::stream_id("data_aux"));
        if (d.aux_size > 0) {
            // Over-generate so that a category filter still leaves aux_size images.
            std::size_t n = d.aux_size;
            if (!d.aux_categories.empty())
                n = (d.aux_size * d.num_classes + d.aux_categories.size() - 1) / d.aux_categories.size();
            out.aux = data::gen_synthetic(synthetic_spec(d, d.aux_domain_shift), n, arng);
            if (!d.aux_categories.empty()) out.aux = limit(data::filter_categories(out.aux, d.aux_categories), d.aux_size, arng);
        }
        if (d.test_size > 0) {
            nn::Rng trng(seed, nn::stream_id("data_test"));
            out.test = data::gen_synthetic(synthetic_spec(d, false), d.test_size, trng);
        }
        return out;
    }

    const auto all = data::load_cifar10(d.path, d.image_size);
    const std::size_t need = d.private_size + d.aux_size + d.test_size;
    if (all.size() < need)
        throw std::runtime_error("cifar10 file holds " + std::to_string(all.size()) + " images, config needs " +
                                 std::to_string(need));
    nn::Rng srng(seed, nn::stream_id("data_split"));
    const auto order = srng.permutation(all.size());
    auto take = [&](std::size_t from, std::size_t n) {
        data::ImageDataset part;
        const std::span<const std::size_t> idx(order.data() + from, n);
        part.images = all.batch_images(idx);
        part.labels = all.batch_labels(idx);
        part.class_names = all.class_names;
        part.provenance = all.provenance;
        return part;
    };
    out.priv = take(0, d.private_size);
    out.test = take(d.private_size, d.test_size);
    // The auxiliary set is drawn from everything not used above, so a
    // category filter can still fill it.
    auto pool = take(d.private_size + d.test_size, all.size() - d.private_size - d.test_size);
    if (!d.aux_categories.empty()) pool = data::filter_categories(pool, d.aux_categories);
    if (pool.size() < d.aux_size) throw std::runtime_error("cifar10 file has too few auxiliary images");
    out.aux = limit(std::move(pool), d.aux_size, srng);
    return out;
}

ExperimentResult execute(const ExperimentConfig& cfg, const std::vector<AttackSection>& attacks) {
    cfg.validate();
    const auto data = make_data(cfg);
    const std::uint64_t seed = cfg.run.seed;
    const std::size_t size = cfg.dataset.image_size;
    const std::size_t classes = data.priv.num_classes();

    nn::Rng mrng(seed, nn::stream_id("model"));
    auto model = build_target(cfg.model.split_point, size, classes, cfg.model.topology, mrng);
    const nn::Shape zshape = model.client.output_shape();

    protocol::SessionConfig sc;
    sc.topology = cfg.model.topology;
    sc.batch_size = cfg.run.batch_size;
    sc.epochs = cfg.run.epochs;
    sc.max_iterations = cfg.run.max_iterations;
    sc.seed = seed;
    sc.client_optimizer = sc.server_optimizer = sc.top_optimizer = optimizer(cfg.run);
    sc.transport = cfg.run.transport;
    sc.precision = cfg.run.precision;
    sc.threaded = cfg.run.threaded;
    sc.server_behavior = cfg.run.server_behavior;
    sc.client_defense = defense::make_defense(cfg.defense);

    ExperimentResult result;
    if (cfg.detection.enabled) {
        result.monitor = std::make_shared<detect::GradientScrutinizer>(cfg.detection.gs);
        sc.client_monitor = result.monitor;
    }

    for (const auto& a : attacks) {
        if (!a.enabled) continue;
        nn::Rng arng(seed, nn::stream_id("attack_init"));
        auto sub = build_substitute(cfg.model.substitute_family, cfg.model.split_point, size, zshape, arng);
        auto disc = build_discriminator(zshape, a.disc_width, arng);
        auto inv = build_inverse(zshape, size, a.inverse_width, arng);
        AttackOutcome o;
        o.settings = a;
        o.attacker = std::make_shared<attack::ForaAttacker>(a.to_attack_config(), std::move(sub), std::move(disc),
                                                            std::move(inv), data.aux, seed);
        sc.server_observers.push_back(o.attacker);
        result.attacks.push_back(std::move(o));
    }

    result.session = protocol::run_training(sc, std::move(model), data.priv);
    if (data.test.size() > 0) result.task_accuracy = protocol::evaluate_accuracy(result.session.model, data.test);
    if (result.session.status != protocol::SessionStatus::completed) {
        result.attacks.clear();
        return result;
    }
    if (result.attacks.empty()) return result;

    result.truth = result.session.truth.all_images();
    // Feature similarity is measured on held-out images through the final
    // client, both networks in eval mode.
    const auto& probe = data.test.size() > 0 ? data.test : data.priv;
    auto& client = result.session.model.client;
    const nn::Mode saved = client.mode();
    client.set_mode(nn::Mode::eval);
    const nn::Tensor target = client.forward(probe.images).flattened();
    client.set_mode(saved);

    for (auto& o : result.attacks) {
        o.inverse_history = o.attacker->train_inverse_phase();
        o.reconstruction = o.attacker->reconstruct_snapshot();
        o.images = metrics::score_images(result.truth, o.reconstruction);
        auto& sub = o.attacker->substitute();
        sub.set_mode(nn::Mode::eval);
        o.features = metrics::feature_similarity(sub.forward(probe.images).flattened(), target);
    }
    return result;
}

ExperimentResult execute(const ExperimentConfig& cfg) { return execute(cfg, {cfg.attack}); }

metrics::MetricsReport build_report(const ExperimentConfig& cfg, const ExperimentResult& result) {
    metrics::MetricsReport r;
    r.config_hash = cfg.hash();
    r.seed = cfg.run.seed;
    r.status = protocol::to_string(result.session.status);
    r.task_accuracy = result.task_accuracy;

    json session = {{"iterations", result.session.iterations},
                    {"topology", protocol::to_string(cfg.model.topology)},
                    {"split_point", cfg.model.split_point}};
    if (result.session.abort_iteration) session["abort_iteration"] = *result.session.abort_iteration;
    r.extra["session"] = session;

    json def = {{"kind", defense::to_string(cfg.defense.kind)}};
    switch (cfg.defense.kind) {
        case defense::DefenseKind::dcor: def["alpha"] = cfg.defense.alpha; break;
        case defense::DefenseKind::dp:
            def["clip"] = cfg.defense.clip;
            def["laplace_scale"] = cfg.defense.laplace_scale;
            if (cfg.defense.laplace_scale > 0) def["nominal_epsilon"] = cfg.defense.nominal_epsilon();
            break;
        case defense::DefenseKind::noise: def["sigma"] = cfg.defense.sigma; break;
        case defense::DefenseKind::none: break;
    }
    r.extra["defense"] = def;

    if (result.monitor) {
        json det = {{"windows", result.monitor->decisions().size()}};
        if (!result.monitor->decisions().empty()) {
            const auto& d = result.monitor->decisions().back();
            det["last_score"] = d.score;
            det["last_mean_gap"] = d.mean_gap;
            det["last_overlap"] = d.overlap;
            det["last_fit_rmse"] = d.fit_rmse;
        }
        det["aborted"] = result.session.status == protocol::SessionStatus::detector_aborted;
        r.extra["detection"] = det;
    }

    if (cfg.attack.enabled) {
        json atk = {{"no_mkmmd", cfg.attack.no_mkmmd},
                    {"no_disc", cfg.attack.no_disc},
                    {"train_substitute", cfg.attack.train_substitute},
                    {"substitute_family", to_string(cfg.model.substitute_family)}};
        if (result.attacks.empty()) {
            atk["skipped"] = "session did not complete";
        } else {
            const auto& o = result.attacks.front();
            r.images = o.images;
            r.features = o.features;
            atk["snapshot_images"] = o.images.size();
            atk["inverse_final_loss"] = o.inverse_history.empty() ? 0.0 : o.inverse_history.back();
            const auto& dh = o.attacker->disc_history();
            if (!dh.empty()) atk["disc_final_loss"] = dh.back();
            const auto& sh = o.attacker->substitute_history();
            if (!sh.empty()) {
                atk["substitute_final_disc"] = sh.back().disc;
                atk["substitute_final_mmd"] = sh.back().mmd;
            }
        }
        r.extra["attack"] = atk;
    }
    return r;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const fs::path& dir) {
    cfg.validate();  // before anything touches the disk
    fs::create_directories(dir);
    metrics::write_text(dir / "config.json", metrics::canonical_dump(cfg.to_json()));

    RunOutcome out;
    try {
        ExperimentResult res = execute(cfg);
        // Every artifact carries the config hash.
        const std::string hash = cfg.hash();
        auto& records = res.session.transcript.records();
        records.insert(records.begin(), json{{"type", "run"}, {"config_hash", hash}, {"seed", cfg.run.seed}});
        res.session.transcript.write(dir / "transcript.jsonl");
        out.report = build_report(cfg, res);
        if (!res.attacks.empty()) {
            const std::size_t n = cfg.run.grid_images;
            if (n > 0) {
                metrics::write_grid_ppm(first_images(res.truth, n), cfg.run.grid_columns, dir / "truth.ppm",
                                        "config_hash " + hash);
                metrics::write_grid_ppm(first_images(res.attacks.front().reconstruction, n), cfg.run.grid_columns,
                                        dir / "reconstruction.ppm", "config_hash " + hash);
            }
        }
        if (cfg.run.checkpoints) {
            const fs::path ck = dir / "checkpoints";
            fs::create_directories(ck);
            save_network(res.session.model.client, ck / "client.slla");
            save_network(res.session.model.server, ck / "server.slla");
            if (res.session.model.top) save_network(*res.session.model.top, ck / "top.slla");
            if (!res.attacks.empty()) res.attacks.front().attacker->save_checkpoints(ck);
            json files = json::array();
            for (const auto& e : fs::directory_iterator(ck)) files.push_back(e.path().filename().string());
            std::sort(files.begin(), files.end());
            metrics::write_text(ck / "manifest.json",
                                metrics::canonical_dump({{"config_hash", hash}, {"files", files}}));
        }
        out.status = out.report.status;
        out.exit_code = res.session.status == protocol::SessionStatus::completed ? kExitCompleted : kExitAborted;
    } catch (const std::exception& e) {
        out.exit_code = kExitError;
        out.status = "error";
        out.error = e.what();
        out.report = {};
        out.report.config_hash = cfg.hash();
        out.report.seed = cfg.run.seed;
        out.report.status = "error";
        out.report.extra["error"] = e.what();
        out.report.extra["partial"] = true;
    }
    metrics::write_report(out.report, dir);
    return out;
}

std::string aggregate_csv(const std::string& axis, const std::vector<SweepRow>& rows, bool offset_seeds) {
    std::string s = "# axis=" + axis + " seed_policy=" + (offset_seeds ? "seed+index" : "same") + "\n";
    s += "index,value,seed,status,exit_code,task_accuracy,mean_psnr,mean_ssim,mean_mse,feature_cosine,feature_mse,"
         "config_hash,error\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const auto& rep = r.outcome.report;
        const bool rec = !rep.images.empty();
        s += std::to_string(i) + "," + csv_field(r.value.is_string() ? r.value.get<std::string>() : r.value.dump()) +
             "," + std::to_string(rep.seed) + "," + r.outcome.status + "," + std::to_string(r.outcome.exit_code) + "," +
             (rep.task_accuracy ? num(*rep.task_accuracy) : "") + "," + (rec ? num(rep.mean_psnr()) : "") + "," +
             (rec ? num(rep.mean_ssim()) : "") + "," + (rec ? num(rep.mean_mse()) : "") + "," +
             (rep.features ? num(rep.features->cosine) : "") + "," + (rep.features ? num(rep.features->mse) : "") +
             "," + rep.config_hash + "," + csv_field(r.outcome.error) + "\n";
    }
    return s;
}

std::vector<SweepRow> run_sweep(const json& base, const std::string& axis, const std::vector<json>& values,
                                const fs::path& dir, const SweepOptions& opts) {
    if (values.empty()) throw ConfigError("sweep: empty value list");
    if (axis.empty()) throw ConfigError("sweep: no axis given");

    std::vector<SweepRow> rows(values.size());
    std::vector<std::optional<ExperimentConfig>> cfgs(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        rows[i].value = values[i];
        rows[i].dir = dir / (std::to_string(i) + "_" + value_label(values[i]));
        json doc = base;
        doc.erase("sweep");
        try {
            const std::string seed_path = "run.seed";
            if (opts.offset_seeds) {
                const std::uint64_t s = parse_config(doc).run.seed;
                set_path(doc, seed_path, s + i);
            }
            set_path(doc, axis, values[i]);
            cfgs[i] = parse_config(doc);
            rows[i].outcome.report.seed = cfgs[i]->run.seed;
        } catch (const std::exception& e) {
            rows[i].outcome.exit_code = kExitError;
            rows[i].outcome.status = "invalid_config";
            rows[i].outcome.error = e.what();
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < values.size(); i = next++) {
            if (!cfgs[i]) continue;
            try {
                rows[i].outcome = run_experiment(*cfgs[i], rows[i].dir);
            } catch (const std::exception& e) {
                rows[i].outcome.exit_code = kExitError;
                rows[i].outcome.status = "error";
                rows[i].outcome.error = e.what();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(opts.threads, 1, values.size());
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    fs::create_directories(dir);
    metrics::write_text(dir / "aggregate.csv", aggregate_csv(axis, rows, opts.offset_seeds));
    return rows;
}

}  // namespace sll::experiment
