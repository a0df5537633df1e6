#include "aada/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "aada/checkpoint.hpp"
#include "aada/errors.hpp"
#include "aada/io.hpp"
#include "aada/pipeline.hpp"
#include "aada/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace aada::cli {

namespace {

using Store = std::map<std::string, std::string>;

Store profile_defaults(const std::string& profile) {
    Store s;
    s["source.lr"] = "0.01";
    s["source.momentum"] = "0.9";
    s["source.weight_decay"] = "1e-5";
    s["source.kappa"] = "4";
    s["source.loss"] = "ace";
    s["source.focal_gamma"] = "2";
    s["da.adam_beta1"] = "0.9";
    s["da.adam_beta2"] = "0.99";
    s["da.omega_t"] = "2";
    s["da.omega_g"] = "2";
    s["da.rho"] = "4";
    s["da.jitter_max_shift"] = "4";
    s["da.entropy_tile_fraction"] = "1";
    s["da.eval_target_f1"] = "0";
    s["da.select"] = "entropy";
    s["augment.sigma"] = "0.1";
    s["augment.rotation"] = "1";
    s["synth.shift"] = "none";
    s["synth.classes"] = "5";
    s["synth.tile_size"] = "512";
    s["synth.source_gsd"] = "0.2";
    s["synth.target_gsd"] = "0.2";
    s["synth.rare_freq"] = "0.015";
    if (profile == "paper") {
        s["da.adam_lr"] = "1e-4";
        s["source.epochs"] = "50";
        s["source.iterations"] = "2500";
        s["source.batch"] = "4";
        s["da.epochs"] = "50";
        s["da.iterations"] = "2500";
        s["da.batch"] = "4";
        s["da.selection_start"] = "25";
        s["augment.patch"] = "256";
        s["infer.window"] = "256";
        s["infer.overlap"] = "128";
        s["infer.tta"] = "1";
        s["model.width_multiplier"] = "1.0";
        s["model.mid_blocks"] = "10";
        s["model.adapter_width"] = "256";
        s["model.adapter_blocks"] = "16";
        s["model.disc_width"] = "64";
        s["synth.tiles"] = "8";
    } else if (profile == "desk") {
        // the compressed schedule runs ~100x fewer iterations than the paper
        // profile; the adversarial pair needs a proportionally faster optimizer
        s["da.adam_lr"] = "3e-3";
        s["source.epochs"] = "12";
        s["source.iterations"] = "100";
        s["source.batch"] = "2";
        s["da.epochs"] = "12";
        s["da.iterations"] = "100";
        s["da.batch"] = "2";
        s["da.selection_start"] = "6";
        s["augment.patch"] = "96";
        s["infer.window"] = "96";
        s["infer.overlap"] = "32";
        s["infer.tta"] = "1";
        s["model.width_multiplier"] = "0.125";
        s["model.mid_blocks"] = "2";
        s["model.adapter_width"] = "32";
        s["model.adapter_blocks"] = "3";
        s["model.disc_width"] = "16";
        s["synth.tiles"] = "6";
    } else {
        throw ConfigError("unknown profile '" + profile + "' (expected paper|desk)");
    }
    return s;
}

void apply_config_file(Store& store, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
            continue;
        }
        auto trim = [](std::string v) {
            const auto a = v.find_first_not_of(" \t\r");
            const auto b = v.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string{} : v.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!store.count(key)) throw ConfigError(path + ": unknown key '" + key + "'");
        store[key] = value;
    }
}

void apply_overrides(Store& store, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        const std::string key = kv.substr(0, eq);
        if (!store.count(key)) throw ConfigError("unknown config key '" + key + "'");
        store[key] = kv.substr(eq + 1);
    }
}

double to_double(const Store& s, const std::string& k) {
    try {
        size_t idx = 0;
        const double v = std::stod(s.at(k), &idx);
        if (idx != s.at(k).size()) throw std::invalid_argument(k);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + k + ": '" + s.at(k) + "'");
    }
}
int to_int(const Store& s, const std::string& k) {
    const double v = to_double(s, k);
    if (v != static_cast<int>(v)) throw ConfigError(k + " must be an integer");
    return static_cast<int>(v);
}
bool to_bool(const Store& s, const std::string& k) {
    const auto& v = s.at(k);
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError(k + " must be a boolean (0/1/true/false/on/off)");
}

AugmentConfig make_augment(const Store& s) {
    AugmentConfig a;
    a.sigma = to_double(s, "augment.sigma");
    a.patch_size = to_int(s, "augment.patch");
    a.rotation = to_bool(s, "augment.rotation");
    return a;
}

SourceTrainConfig make_source_cfg(const Store& s) {
    SourceTrainConfig c;
    c.lr = to_double(s, "source.lr");
    c.momentum = to_double(s, "source.momentum");
    c.weight_decay = to_double(s, "source.weight_decay");
    c.epochs = to_int(s, "source.epochs");
    c.iterations_per_epoch = to_int(s, "source.iterations");
    c.batch = to_int(s, "source.batch");
    c.kappa = to_double(s, "source.kappa");
    c.focal_gamma = to_double(s, "source.focal_gamma");
    const auto& loss = s.at("source.loss");
    if (loss == "ace")
        c.loss = SupervisedLoss::ace;
    else if (loss == "ce")
        c.loss = SupervisedLoss::ce;
    else if (loss == "focal")
        c.loss = SupervisedLoss::focal;
    else
        throw ConfigError("source.loss must be ace|ce|focal");
    c.augment = make_augment(s);
    c.validate();
    return c;
}

DAConfig make_da_cfg(const Store& s) {
    DAConfig c;
    c.adam_lr = to_double(s, "da.adam_lr");
    c.adam_beta1 = to_double(s, "da.adam_beta1");
    c.adam_beta2 = to_double(s, "da.adam_beta2");
    c.lw.omega_t = to_double(s, "da.omega_t");
    c.lw.omega_g = to_double(s, "da.omega_g");
    c.lw.rho = to_double(s, "da.rho");
    c.epochs = to_int(s, "da.epochs");
    c.iterations_per_epoch = to_int(s, "da.iterations");
    c.batch = to_int(s, "da.batch");
    c.selection_start_epoch = to_int(s, "da.selection_start");
    c.jitter_max_shift = to_int(s, "da.jitter_max_shift");
    c.entropy_tile_fraction = to_double(s, "da.entropy_tile_fraction");
    c.eval_target_f1 = to_bool(s, "da.eval_target_f1");
    c.augment = make_augment(s);
    c.validate();
    return c;
}

TilingPlan make_tiling(const Store& s) {
    TilingPlan p;
    p.window = to_int(s, "infer.window");
    p.overlap = to_int(s, "infer.overlap");
    p.tta = to_bool(s, "infer.tta");
    p.validate();
    return p;
}

SynthShiftConfig make_synth_cfg(const Store& s) {
    SynthShiftConfig cfg = synth_preset(s.at("synth.shift"));
    cfg.class_count = to_int(s, "synth.classes");
    cfg.tiles_per_domain = to_int(s, "synth.tiles");
    cfg.tile_size = to_int(s, "synth.tile_size");
    cfg.source_gsd = to_double(s, "synth.source_gsd");
    cfg.target_gsd = to_double(s, "synth.target_gsd");
    cfg.rare_class_frequency = to_double(s, "synth.rare_freq");
    cfg.validate();
    return cfg;
}

uint64_t resolve_seed(std::optional<uint64_t> flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("AADA_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("AADA_SEED is not a valid integer");
        }
    }
    return 0;
}

void dump_store(const Store& s) {
    for (const auto& [k, v] : s) std::cout << k << " = " << v << "\n";
}

json metrics_to_json(const Metrics& m) {
    json j;
    j["oa"] = m.oa;
    j["mean_f1"] = m.mean_f1;
    j["mean_iou"] = m.mean_iou;
    j["f1"] = m.f1;
    j["iou"] = m.iou;
    std::vector<int> present;
    for (size_t c = 0; c < m.present.size(); ++c)
        if (m.present[c]) present.push_back(static_cast<int>(c));
    j["present_classes"] = present;
    return j;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
    std::ostringstream os;
    os << "ref\\pred";
    for (int c = 0; c < cm.l; ++c) os << ",class" << c;
    os << "\n";
    for (int r = 0; r < cm.l; ++r) {
        os << "class" << r;
        for (int c = 0; c < cm.l; ++c) os << ',' << cm.at(r, c);
        os << "\n";
    }
    os << "ignored," << cm.ignored_pixels << "\n";
    return os.str();
}

double read_meta_gsd(const std::string& dir) {
    std::ifstream in(dir + "/meta.json");
    if (!in) throw DataError("missing " + dir + "/meta.json");
    json meta;
    in >> meta;
    return meta.at("gsd").get<double>();
}

// ---- commands ------------------------------------------------------------

int cmd_synth_gen(const Store& store, const std::string& out_dir, uint64_t seed) {
    const SynthShiftConfig cfg = make_synth_cfg(store);
    RngStream rng(seed);
    SynthPair pair = synth_domain_pair(cfg, rng);
    io::save_dataset(out_dir + "/source", pair.source);
    io::save_dataset(out_dir + "/target", pair.target);

    json manifest;
    manifest["seed"] = seed;
    manifest["shift"] = store.at("synth.shift");
    manifest["class_count"] = cfg.class_count;
    manifest["tiles_per_domain"] = cfg.tiles_per_domain;
    manifest["tile_size"] = cfg.tile_size;
    manifest["source_gsd"] = cfg.source_gsd;
    manifest["target_gsd"] = cfg.target_gsd;
    manifest["rare_class_frequency"] = cfg.rare_class_frequency;
    manifest["channel_gain"] = cfg.channel_gain;
    manifest["channel_offset"] = cfg.channel_offset;
    manifest["class_color_shift"] = cfg.class_color_shift;
    manifest["texture_shift"] = cfg.texture_shift;
    manifest["height_gain"] = cfg.height_gain;
    manifest["class_frequency_scale"] = cfg.class_frequency_scale;
    manifest["source_label_hist"] = pair.source_label_hist;
    manifest["target_label_hist"] = pair.target_label_hist;
    manifest["label_jsd"] = pair.label_jsd;
    io::write_file_atomic(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    std::cerr << "synth-gen: wrote " << cfg.tiles_per_domain << " tiles per domain, label JSD "
              << pair.label_jsd << "\n";
    return 0;
}

int cmd_source_train(const Store& store, const std::string& source_dir,
                     const std::string& target_dir, const std::string& eval_dir,
                     const std::string& backbone, const std::string& out_dir,
                     uint64_t seed) {
    DomainDataset raw = io::load_dataset(source_dir);
    if (raw.labels_eval_only) throw DataError("source dataset labels are evaluation-only");
    bool has_labels = false;
    for (const auto& smp : raw.samples)
        if (!smp.labels.empty()) has_labels = true;
    if (!has_labels) throw DataError("source dataset carries no labels");

    double working_gsd = raw.gsd();
    if (!target_dir.empty()) {
        const double tgsd = read_meta_gsd(target_dir);
        working_gsd = std::max(raw.gsd(), tgsd);
        if (tgsd > raw.gsd()) {
            for (auto& smp : raw.samples) {
                const int oh = std::max(
                    1, static_cast<int>(std::lround(smp.height() * smp.gsd / tgsd)));
                const int ow =
                    std::max(1, static_cast<int>(std::lround(smp.width() * smp.gsd / tgsd)));
                smp.channels = resize_bilinear(smp.channels, oh, ow);
                if (!smp.labels.empty()) smp.labels = resize_nearest(smp.labels, oh, ow);
                smp.gsd = tgsd;
            }
        }
    }
    DomainDataset ds = normalize_dataset(std::move(raw));

    ClassifierSpec cspec;
    cspec.input_channels = ds.channels();
    cspec.class_count = ds.class_count;
    cspec.width_multiplier = to_double(store, "model.width_multiplier");
    cspec.mid_blocks = to_int(store, "model.mid_blocks");
    cspec.pretrained_backbone = !backbone.empty();

    RngStream rng(seed);
    auto net_rng = rng.fork(1);
    auto train_rng = rng.fork(2);
    nets::Classifier classifier(cspec, net_rng);
    if (!backbone.empty()) {
        const int adopted = load_backbone_weights(classifier, backbone);
        if (adopted == 0) throw DataError("backbone: no compatible encoder tensors in " + backbone);
        std::cerr << "source-train: adopted " << adopted << " backbone tensors\n";
    }

    fs::create_directories(out_dir);
    std::ofstream log(out_dir + "/source_log.csv");
    log << "epoch,iter,L_sup,L_sup_ST,L_advA,L_advD,L_reg,mean_entropy\n";

    const SourceTrainConfig cfg = make_source_cfg(store);
    SgdMomentum opt;
    auto result = source_train(classifier, ds, cfg, train_rng, &opt,
                               [&log](const TrainLogRow& r) { log << log_row_csv(r) << "\n"; });

    ModelBundle bundle;
    bundle.classifier = std::make_unique<nets::Classifier>(std::move(classifier));
    bundle.epoch = cfg.epochs;
    CheckpointMeta meta;
    meta.epoch = cfg.epochs;
    meta.classifier_spec = cspec;
    meta.source_stats = ds.stats;
    meta.working_gsd = working_gsd;
    meta.class_count = ds.class_count;
    OptimizerStates opt_states;
    opt_states.sgd_c = &opt;
    save_checkpoint(out_dir + "/source.ckpt", bundle, meta, opt_states);

    json summary;
    summary["epochs"] = cfg.epochs;
    summary["final_mean_loss"] = result.history.back().mean_loss;
    summary["final_train_metrics"] = metrics_to_json(metrics(result.history.back().train_confusion));

    if (!eval_dir.empty()) {
        DomainDataset eval_raw = io::load_dataset(eval_dir);
        ConfusionMatrix cm(ds.class_count);
        const TilingPlan plan = make_tiling(store);
        for (auto& smp : eval_raw.samples) {
            const int nh = smp.height(), nw = smp.width();
            LabelMap ref = smp.labels;
            if (ref.empty()) continue;
            if (smp.gsd < working_gsd) {
                const int oh = std::max(
                    1, static_cast<int>(std::lround(smp.height() * smp.gsd / working_gsd)));
                const int ow = std::max(
                    1, static_cast<int>(std::lround(smp.width() * smp.gsd / working_gsd)));
                smp.channels = resize_bilinear(smp.channels, oh, ow);
            }
            apply_normalization(smp, ds.stats);
            LabelMap pred = pipeline::predict_tile_labels(*bundle.classifier, smp,
                                                          ds.class_count, plan, nh, nw);
            cm.accumulate(pred, ref);
        }
        if (cm.total() > 0) summary["eval_metrics"] = metrics_to_json(metrics(cm));
    }
    io::write_file_atomic(out_dir + "/source_summary.json", summary.dump(2) + "\n");
    std::cerr << "source-train: done, checkpoint at " << out_dir << "/source.ckpt\n";
    return 0;
}

int cmd_adapt(const Store& store, const std::string& source_dir, const std::string& target_dir,
              const std::string& init_ckpt, const std::string& out_dir, uint64_t seed) {
    auto loaded = load_checkpoint(init_ckpt);
    if (!loaded.bundle.classifier)
        throw DataError("adapt: init checkpoint carries no classifier");

    DomainDataset source_raw = io::load_dataset(source_dir);
    DomainDataset target_raw = io::load_dataset(target_dir);
    pipeline::PreparedData prep =
        pipeline::prepare(std::move(source_raw), std::move(target_raw),
                          &loaded.meta.source_stats);

    const DAConfig cfg = make_da_cfg(store);
    const SourceTrainConfig source_cfg = make_source_cfg(store);
    const TilingPlan plan = make_tiling(store);

    RngStream rng(seed);
    auto net_rng = rng.fork(3);
    auto train_rng = rng.fork(4);

    AdapterSpec aspec;
    aspec.input_channels = prep.source.channels();
    aspec.base_width = to_int(store, "model.adapter_width");
    aspec.residual_blocks = to_int(store, "model.adapter_blocks");
    DiscriminatorSpec dspec;
    dspec.input_channels = prep.source.channels();
    dspec.width = to_int(store, "model.disc_width");

    ModelBundle bundle;
    bundle.classifier = std::move(loaded.bundle.classifier);
    bundle.adapter = std::make_unique<nets::Adapter>(aspec, net_rng);
    bundle.discriminator = std::make_unique<nets::Discriminator>(dspec, net_rng);

    fs::create_directories(out_dir);
    json eval_report;
    bool have_target_labels = false;
    for (const auto& l : prep.target_native_labels)
        if (!l.empty()) have_target_labels = true;
    if (have_target_labels) {
        auto before = pipeline::evaluate_on_target(*bundle.classifier, prep, plan);
        eval_report["before"] = metrics_to_json(before.m);
        std::cerr << "adapt: no-DA target mean F1 " << before.m.mean_f1 << "\n";
    }

    CheckpointMeta meta;
    meta.classifier_spec = loaded.meta.classifier_spec;
    meta.adapter_spec = aspec;
    meta.discriminator_spec = dspec;
    meta.source_stats = loaded.meta.source_stats;
    meta.target_stats = prep.target.stats;
    meta.working_gsd = prep.working_gsd;
    meta.class_count = prep.target.class_count;

    std::ofstream log(out_dir + "/da_log.csv");
    log << "epoch,iter,L_sup,L_sup_ST,L_advA,L_advD,L_reg,mean_entropy\n";
    auto result = da_train(bundle, prep.source, prep.target, cfg, source_cfg, meta,
                           out_dir + "/checkpoints", train_rng,
                           [&log](const TrainLogRow& r) { log << log_row_csv(r) << "\n"; });

    const std::string select_mode = store.at("da.select");
    CheckpointRecord selected;
    if (select_mode == "entropy") {
        selected = select_parameters(result.history);
    } else if (select_mode == "last") {
        selected = result.history.back();
    } else {
        throw ConfigError("da.select must be entropy|last");
    }
    io::write_file_atomic(out_dir + "/selection_report.json",
                          selection_report_json(result.history, selected));
    fs::copy_file(selected.checkpoint_path, out_dir + "/selected.ckpt",
                  fs::copy_options::overwrite_existing);

    if (have_target_labels) {
        auto sel_loaded = load_checkpoint(out_dir + "/selected.ckpt");
        auto after = pipeline::evaluate_on_target(*sel_loaded.bundle.classifier, prep, plan);
        eval_report["after"] = metrics_to_json(after.m);
        eval_report["selected_epoch"] = selected.epoch;
        eval_report["mean_f1_improvement"] =
            after.m.mean_f1 - eval_report["before"]["mean_f1"].get<double>();
        if (result.history.back().checkpoint_path != selected.checkpoint_path) {
            auto last_loaded = load_checkpoint(result.history.back().checkpoint_path);
            auto after_last =
                pipeline::evaluate_on_target(*last_loaded.bundle.classifier, prep, plan);
            eval_report["after_last"] = metrics_to_json(after_last.m);
        } else {
            eval_report["after_last"] = eval_report["after"];
        }
        io::write_file_atomic(out_dir + "/eval_target.json", eval_report.dump(2) + "\n");
        std::cerr << "adapt: selected epoch " << selected.epoch << ", target mean F1 "
                  << after.m.mean_f1 << "\n";
    } else {
        std::cerr << "adapt: selected epoch " << selected.epoch << "\n";
    }
    return 0;
}

int cmd_infer(const Store& store, const std::string& ckpt_path, const std::string& input_dir,
              const std::string& out_dir, bool want_probs, const std::string& domain) {
    auto loaded = load_checkpoint(ckpt_path);
    if (!loaded.bundle.classifier) throw DataError("infer: checkpoint carries no classifier");
    const NormalizationStats* stats = &loaded.meta.source_stats;
    if (domain == "target") {
        if (!loaded.meta.target_stats)
            throw DataError("infer: checkpoint has no target statistics");
        stats = &*loaded.meta.target_stats;
    } else if (domain != "source" && domain != "auto") {
        throw ConfigError("infer: --domain must be source|target|auto");
    }
    if (domain == "auto" && loaded.meta.target_stats) stats = &*loaded.meta.target_stats;

    DomainDataset input = io::load_dataset(input_dir);
    const TilingPlan plan = make_tiling(store);
    fs::create_directories(out_dir);

    json meta;
    meta["gsd"] = input.gsd();
    meta["class_count"] = loaded.meta.class_count;
    meta["height_channel"] = input.height_channel;
    meta["channel_names"] = json::array();
    io::write_file_atomic(out_dir + "/meta.json", meta.dump(2) + "\n");

    for (size_t t = 0; t < input.samples.size(); ++t) {
        RasterSample& smp = input.samples[t];
        const int nh = smp.height(), nw = smp.width();
        if (loaded.meta.working_gsd > 0.0 && smp.gsd < loaded.meta.working_gsd) {
            const int oh = std::max(1, static_cast<int>(std::lround(
                                           smp.height() * smp.gsd / loaded.meta.working_gsd)));
            const int ow = std::max(1, static_cast<int>(std::lround(
                                           smp.width() * smp.gsd / loaded.meta.working_gsd)));
            smp.channels = resize_bilinear(smp.channels, oh, ow);
        }
        apply_normalization(smp, *stats);
        auto pred = sliding_window_predict(pipeline::classifier_forward(*loaded.bundle.classifier),
                                           smp, loaded.meta.class_count, plan);
        LabelMap labels = upsample_scores_to(pred.scores, nh, nw);
        char name[32];
        std::snprintf(name, sizeof(name), "tile%03zu", t);
        io::write_npy_labels(out_dir + "/" + name + ".lbl.npy", labels);
        if (want_probs) {
            Tensor probs = (nh == pred.scores.dim(1) && nw == pred.scores.dim(2))
                               ? pred.scores
                               : resize_bilinear(pred.scores, nh, nw);
            // stored H x W x l to match the raster container convention
            const int l = probs.dim(0);
            std::vector<double> hwl(static_cast<size_t>(nh) * nw * l);
            for (int c = 0; c < l; ++c)
                for (int64_t i = 0; i < static_cast<int64_t>(nh) * nw; ++i)
                    hwl[static_cast<size_t>(i) * l + c] = probs[static_cast<int64_t>(c) * nh * nw + i];
            io::write_npy(out_dir + "/" + name + ".prob.npy", {nh, nw, l}, hwl.data());
        }
    }
    std::cerr << "infer: wrote " << input.samples.size() << " label rasters to " << out_dir
              << "\n";
    return 0;
}

int cmd_evaluate(const Store& store, const std::string& pred_dir, const std::string& ref_dir,
                 const std::string& out_dir) {
    (void)store;
    DomainDataset ref = io::load_dataset(ref_dir);
    ConfusionMatrix cm(ref.class_count);
    for (size_t t = 0; t < ref.samples.size(); ++t) {
        if (ref.samples[t].labels.empty()) continue;
        char name[32];
        std::snprintf(name, sizeof(name), "tile%03zu", t);
        const std::string lbl = pred_dir + "/" + name + ".lbl.npy";
        if (!fs::exists(lbl)) throw DataError("evaluate: missing prediction " + lbl);
        LabelMap pred = io::read_npy_labels(lbl);
        cm.accumulate(pred, ref.samples[t].labels);
    }
    if (cm.total() == 0) throw DataError("evaluate: reference has no labelled pixels");
    const Metrics m = metrics(cm);
    fs::create_directories(out_dir);
    io::write_file_atomic(out_dir + "/metrics.json", metrics_to_json(m).dump(2) + "\n");
    io::write_file_atomic(out_dir + "/confusion.csv", confusion_csv(cm));
    std::cerr << "evaluate: OA " << m.oa << ", mean F1 " << m.mean_f1 << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"adversarial appearance adaptation toolkit"};
    app.require_subcommand(1);
    app.fallthrough(true);

    std::string profile = "desk";
    std::string config_file;
    std::vector<std::string> sets;
    std::optional<uint64_t> seed_flag;
    bool dump = false;
    app.add_option("--profile", profile, "configuration profile (paper|desk)");
    app.add_option("--config", config_file, "flat key=value config file");
    app.add_option("--set", sets, "override a config key, e.g. --set da.rho=0");
    app.add_option("--seed", seed_flag, "rng seed (falls back to AADA_SEED, then 0)");
    app.add_flag("--dump-config", dump, "print the resolved configuration and exit");

    std::string out_dir, source_dir, target_dir, eval_dir, init_ckpt, input_dir, pred_dir,
        ref_dir, ckpt_path;
    std::string shift, loss_kind, select_mode, domain = "auto";
    std::optional<double> rho;
    bool no_tta = false, want_probs = false;

    auto* synth = app.add_subcommand("synth-gen", "generate a synthetic two-domain pair");
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--shift", shift, "shift preset (none|radiometric|skewed)");

    auto* strain = app.add_subcommand("source-train", "supervised training on the source domain");
    strain->add_option("--source", source_dir, "labelled source dataset")->required();
    strain->add_option("--target", target_dir, "target dataset (fixes the working resolution)");
    strain->add_option("--eval", eval_dir, "held-out split to score after training");
    strain->add_option("--backbone", ckpt_path, "adopt encoder weights from this checkpoint");
    strain->add_option("--out", out_dir, "output directory")->required();
    strain->add_option("--loss", loss_kind, "supervised loss (ace|ce|focal)");

    auto* adapt = app.add_subcommand("adapt", "adversarial adaptation plus parameter selection");
    adapt->add_option("--source", source_dir, "labelled source dataset")->required();
    adapt->add_option("--target", target_dir, "unlabelled target dataset")->required();
    adapt->add_option("--init", init_ckpt, "source-training checkpoint")->required();
    adapt->add_option("--out", out_dir, "output directory")->required();
    adapt->add_option("--rho", rho, "discriminator regularization weight");
    adapt->add_option("--select", select_mode, "checkpoint selection rule (entropy|last)");

    auto* infer = app.add_subcommand("infer", "tiled prediction with optional TTA");
    infer->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    infer->add_option("--input", input_dir, "input dataset directory")->required();
    infer->add_option("--out", out_dir, "output directory")->required();
    infer->add_flag("--no-tta", no_tta, "disable test-time augmentation");
    infer->add_flag("--probs", want_probs, "also write probability rasters");
    infer->add_option("--domain", domain, "statistics to apply (source|target|auto)");

    auto* evaluate = app.add_subcommand("evaluate", "score predictions against reference labels");
    evaluate->add_option("--pred", pred_dir, "directory of predicted label rasters")->required();
    evaluate->add_option("--ref", ref_dir, "reference dataset directory")->required();
    evaluate->add_option("--out", out_dir, "output directory")->required();

    try {
        std::vector<std::string> argv_like(args.rbegin(), args.rend());
        app.parse(std::move(argv_like));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        Store store = profile_defaults(profile);
        if (!config_file.empty()) apply_config_file(store, config_file);
        apply_overrides(store, sets);
        if (!shift.empty()) store["synth.shift"] = shift;
        if (!loss_kind.empty()) store["source.loss"] = loss_kind;
        if (!select_mode.empty()) store["da.select"] = select_mode;
        if (rho) store["da.rho"] = std::to_string(*rho);
        if (no_tta) store["infer.tta"] = "0";
        const uint64_t seed = resolve_seed(seed_flag);

        if (dump) {
            dump_store(store);
            return 0;
        }
        if (synth->parsed()) return cmd_synth_gen(store, out_dir, seed);
        if (strain->parsed())
            return cmd_source_train(store, source_dir, target_dir, eval_dir, ckpt_path,
                                    out_dir, seed);
        if (adapt->parsed())
            return cmd_adapt(store, source_dir, target_dir, init_ckpt, out_dir, seed);
        if (infer->parsed())
            return cmd_infer(store, ckpt_path, input_dir, out_dir, want_probs, domain);
        if (evaluate->parsed()) return cmd_evaluate(store, pred_dir, ref_dir, out_dir);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace aada::cli
