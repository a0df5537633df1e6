#include "aada/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "aada/errors.hpp"
#include "aada/inference.hpp"
#include "aada/ops.hpp"

namespace fs = std::filesystem;

namespace aada {

void SourceTrainConfig::validate() const {
    if (lr <= 0.0 || momentum < 0.0 || weight_decay < 0.0)
        throw ConfigError("source_train: optimizer settings must be positive");
    if (epochs < 1 || iterations_per_epoch < 1 || batch < 1)
        throw ConfigError("source_train: schedule must be positive");
    if (kappa < 0.0) throw ConfigError("source_train: kappa must be >= 0");
    augment.validate();
}

void DAConfig::validate() const {
    if (adam_lr <= 0.0) throw ConfigError("da: adam_lr must be positive");
    if (epochs < 1 || iterations_per_epoch < 1 || batch < 1)
        throw ConfigError("da: schedule must be positive");
    if (selection_start_epoch >= epochs)
        throw ConfigError("da: selection_start_epoch must be < epochs");
    if (jitter_max_shift < 0) throw ConfigError("da: jitter_max_shift must be >= 0");
    if (lw.omega_t < 0.0 || lw.omega_g < 0.0 || lw.rho < 0.0)
        throw ConfigError("da: loss weights must be >= 0");
    if (entropy_tile_fraction <= 0.0 || entropy_tile_fraction > 1.0)
        throw ConfigError("da: entropy_tile_fraction must be in (0,1]");
    augment.validate();
}

std::string log_row_csv(const TrainLogRow& row) {
    std::ostringstream os;
    os.precision(10);
    os << row.epoch << ',' << row.iter << ',' << row.l_sup << ',' << row.l_sup_st << ','
       << row.l_adv_a << ',' << row.l_adv_d << ',' << row.l_reg << ',';
    if (row.mean_entropy) os << *row.mean_entropy;
    return os.str();
}

namespace {

void accumulate_batch_confusion(ConfusionMatrix& cm, const Tensor& scores,
                                const std::vector<LabelMap>& labels) {
    const int b = scores.dim(0), l = scores.dim(1), h = scores.dim(2), w = scores.dim(3);
    for (int bi = 0; bi < b; ++bi) {
        if (labels[static_cast<size_t>(bi)].empty()) continue;
        Tensor s({l, h, w});
        std::copy(scores.data() + static_cast<int64_t>(bi) * l * h * w,
                  scores.data() + static_cast<int64_t>(bi + 1) * l * h * w, s.data());
        cm.accumulate(argmax_labels(s), labels[static_cast<size_t>(bi)]);
    }
}

nn::Var supervised_loss(SupervisedLoss kind, const nn::Var& scores,
                        const std::vector<LabelMap>& labels, const ClassWeights& weights,
                        double gamma) {
    switch (kind) {
        case SupervisedLoss::focal:
            return losses::focal_loss(scores, labels, gamma);
        case SupervisedLoss::ce:
            return losses::weighted_ce(scores, labels,
                                       ClassWeights::unit(static_cast<int>(weights.w.size())));
        case SupervisedLoss::ace:
        default:
            return losses::weighted_ce(scores, labels, weights);
    }
}

}  // namespace

SourceTrainResult source_train(nets::Classifier& classifier, const DomainDataset& source,
                               const SourceTrainConfig& cfg, RngStream& rng,
                               SgdMomentum* optimizer, const LogSink& log) {
    cfg.validate();
    source.validate();
    if (source.labels_eval_only)
        throw DataError("source_train: dataset labels are flagged evaluation-only");

    nn::ParamSet ps;
    classifier.collect(ps);
    auto params = ps.vars();
    SgdMomentum local_opt{cfg.lr, cfg.momentum, cfg.weight_decay, {}};
    SgdMomentum& opt = optimizer ? *optimizer : local_opt;
    opt.lr = cfg.lr;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;

    const int l = classifier.spec().class_count;
    ClassWeights weights = ClassWeights::unit(l, cfg.kappa);

    SourceTrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_confusion = ConfusionMatrix(l);
        stats.weights_used = weights;
        double loss_sum = 0.0;

        for (int iter = 1; iter <= cfg.iterations_per_epoch; ++iter) {
            Batch batch = make_batch(source, cfg.batch, cfg.augment, rng);
            auto x = nn::constant(std::move(batch.images));
            auto scores = classifier.forward(x, nn::FwdCtx{true, true});
            auto loss = supervised_loss(cfg.loss, scores, batch.labels, weights,
                                        cfg.focal_gamma);
            if (!std::isfinite(loss->value[0]))
                throw DivergenceError("source_train: non-finite loss at epoch " +
                                      std::to_string(epoch));
            nn::zero_grad(params);
            nn::backward(loss);
            opt.step(params);

            accumulate_batch_confusion(stats.train_confusion, scores->value, batch.labels);
            loss_sum += loss->value[0];
            if (log) log(TrainLogRow{epoch, iter, loss->value[0], 0, 0, 0, 0, {}});
        }

        stats.mean_loss = loss_sum / cfg.iterations_per_epoch;
        std::vector<bool> present;
        stats.ious = iou_per_class(stats.train_confusion, &present);
        if (cfg.loss == SupervisedLoss::ace)
            weights = ace_weights(stats.ious, present, cfg.kappa);
        if (log) log(TrainLogRow{epoch, 0, stats.mean_loss, 0, 0, 0, 0, {}});
        result.history.push_back(std::move(stats));
    }
    return result;
}

Tensor discriminator_input_jitter(const Tensor& bchw, RngStream& rng, int max_shift,
                                  double sigma) {
    const int b = bchw.dim(0), c = bchw.dim(1), h = bchw.dim(2), w = bchw.dim(3);
    if (h <= max_shift || w <= max_shift)
        throw DataError("jitter: patch not larger than max_shift");
    Tensor out(bchw.shape());
    for (int bi = 0; bi < b; ++bi) {
        const int dy = max_shift > 0 ? rng.uniform_int(0, max_shift) : 0;
        const int dx = max_shift > 0 ? rng.uniform_int(0, max_shift) : 0;
        for (int ci = 0; ci < c; ++ci) {
            const double* src = bchw.data() + (static_cast<int64_t>(bi) * c + ci) * h * w;
            double* dst = out.data() + (static_cast<int64_t>(bi) * c + ci) * h * w;
            for (int i = 0; i < h; ++i) {
                int si = i - dy;
                if (si < 0) si = -si;  // reflect the vacated leading edge
                for (int j = 0; j < w; ++j) {
                    int sj = j - dx;
                    if (sj < 0) sj = -sj;
                    dst[static_cast<int64_t>(i) * w + j] = src[static_cast<int64_t>(si) * w + sj];
                }
            }
        }
        if (sigma > 0.0) {
            for (int ci = 0; ci < c; ++ci) {
                const double gain = rng.normal(1.0, sigma);
                const double offset = rng.normal(0.0, sigma);
                double* dst = out.data() + (static_cast<int64_t>(bi) * c + ci) * h * w;
                for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
                    dst[i] = dst[i] * gain + offset;
            }
        }
    }
    return out;
}

DATrainer::DATrainer(ModelBundle& bundle, const DomainDataset& source,
                     const DomainDataset& target, const DAConfig& cfg,
                     const SourceTrainConfig& source_cfg, RngStream& rng)
    : bundle_(bundle),
      source_(source),
      target_(target),
      cfg_(cfg),
      rng_(rng),
      opt_c_{source_cfg.lr, source_cfg.momentum, source_cfg.weight_decay, {}},
      opt_a_{cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8, 0, {}, {}},
      opt_d_{cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8, 0, {}, {}} {
    cfg_.validate();
    if (!bundle.classifier || !bundle.adapter || !bundle.discriminator)
        throw ConfigError("da_train: bundle must carry classifier, adapter, discriminator");
    source.validate();
    target.validate();
    nn::ParamSet psc, psa, psd;
    bundle.classifier->collect(psc);
    bundle.adapter->collect(psa);
    bundle.discriminator->collect(psd);
    params_c_ = psc.vars();
    params_a_ = psa.vars();
    params_d_ = psd.vars();
    weights_ = ClassWeights::unit(bundle.classifier->spec().class_count, source_cfg.kappa);
    epoch_cm_ = ConfusionMatrix(bundle.classifier->spec().class_count);
}

DATrainer::StepLosses DATrainer::joint_step() {
    StepLosses out;
    Batch sbatch = make_batch(source_, cfg_.batch, cfg_.augment, rng_);
    auto xs = nn::constant(std::move(sbatch.images));

    auto xst = bundle_.adapter->forward(xs, nn::FwdCtx{true, true});
    auto r_st = bundle_.classifier->forward(xst, bn_policy_ctx(false));
    auto r_s = bundle_.classifier->forward(xs, bn_policy_ctx(true));
    auto p_gen = bundle_.discriminator->forward(xst, nn::FwdCtx{true, true});

    auto l_st = losses::weighted_ce(r_st, sbatch.labels, weights_);
    auto l_s = losses::weighted_ce(r_s, sbatch.labels, weights_);
    auto l_adv = losses::adv_gen_loss(p_gen);
    auto joint = losses::joint_loss(l_st, l_s, l_adv, cfg_.lw);

    nn::zero_grad(params_c_);
    nn::zero_grad(params_a_);
    nn::zero_grad(params_d_);
    nn::backward(joint);
    opt_a_.step(params_a_);
    opt_c_.step(params_c_);

    accumulate_batch_confusion(epoch_cm_, r_st->value, sbatch.labels);
    last_xst_ = xst->value;
    out.l_sup = l_s->value[0];
    out.l_sup_st = l_st->value[0];
    out.l_adv_a = l_adv->value[0];
    loss_sum_ += joint->value[0];
    ++loss_count_;
    return out;
}

void DATrainer::disc_step(StepLosses& losses_out) {
    if (last_xst_.empty()) throw ConfigError("da_train: disc_step before joint_step");
    Batch tbatch = make_batch(target_, cfg_.batch, cfg_.augment, rng_);
    tbatch.labels.clear();  // target labels are never consumed in training

    auto xt = nn::constant(std::move(tbatch.images));
    auto xst_jittered = nn::constant(
        discriminator_input_jitter(last_xst_, rng_, cfg_.jitter_max_shift, cfg_.augment.sigma));

    auto p_t = bundle_.discriminator->forward(xt, nn::FwdCtx{true, true});
    auto p_st = bundle_.discriminator->forward(xst_jittered, nn::FwdCtx{true, true});
    auto l_advd = losses::adv_disc_loss(p_t, p_st);
    auto l_reg = losses::disc_reg_loss(p_t, p_st);
    auto total = losses::disc_total_loss(l_advd, l_reg, cfg_.lw.rho);

    nn::zero_grad(params_c_);
    nn::zero_grad(params_a_);
    nn::zero_grad(params_d_);
    nn::backward(total);
    opt_d_.step(params_d_);

    for (int64_t i = 0; i < p_t->value.size(); ++i) sat_sum_ += p_t->value[i];
    for (int64_t i = 0; i < p_st->value.size(); ++i) sat_sum_ += p_st->value[i];
    sat_count_ += p_t->value.size() + p_st->value.size();
    losses_out.l_adv_d = l_advd->value[0];
    losses_out.l_reg = l_reg->value[0];
    last_xst_ = Tensor();
}

EpochStats DATrainer::end_epoch() {
    EpochStats stats;
    stats.epoch = epoch_;
    stats.train_confusion = epoch_cm_;
    stats.weights_used = weights_;
    stats.mean_loss = loss_count_ > 0 ? loss_sum_ / static_cast<double>(loss_count_) : 0.0;
    std::vector<bool> present;
    stats.ious = iou_per_class(epoch_cm_, &present);
    weights_ = ace_weights(stats.ious, present, weights_.kappa);

    if (sat_count_ > 0) {
        const double mean_p = sat_sum_ / static_cast<double>(sat_count_);
        if (mean_p < 1e-3 || mean_p > 1.0 - 1e-3)
            std::cerr << "warning: discriminator saturated in epoch " << epoch_
                      << " (mean p = " << mean_p << ")\n";
    }

    epoch_cm_ = ConfusionMatrix(bundle_.classifier->spec().class_count);
    sat_sum_ = 0.0;
    sat_count_ = 0;
    loss_sum_ = 0.0;
    loss_count_ = 0;
    ++epoch_;
    return stats;
}

DATrainResult da_train(ModelBundle& bundle, const DomainDataset& source,
                       const DomainDataset& target, const DAConfig& cfg,
                       const SourceTrainConfig& source_cfg, const CheckpointMeta& meta_base,
                       const std::string& checkpoint_dir, RngStream& rng, const LogSink& log) {
    cfg.validate();
    fs::create_directories(checkpoint_dir);
    DATrainer trainer(bundle, source, target, cfg, source_cfg, rng);

    DATrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (int iter = 1; iter <= cfg.iterations_per_epoch; ++iter) {
            auto losses = trainer.iteration();
            if (log)
                log(TrainLogRow{epoch, iter, losses.l_sup, losses.l_sup_st, losses.l_adv_a,
                                losses.l_adv_d, losses.l_reg, {}});
        }
        EpochStats stats = trainer.end_epoch();
        bundle.epoch = epoch;

        CheckpointRecord record;
        record.epoch = epoch;
        if (epoch >= cfg.selection_start_epoch) {
            TargetEpochEval eval = evaluate_target(*bundle.classifier, target,
                                                   cfg.entropy_tile_fraction,
                                                   cfg.eval_target_f1);
            record.mean_entropy = eval.mean_entropy;
            record.target_mean_f1 = eval.mean_f1;
        }

        CheckpointMeta meta = meta_base;
        meta.epoch = epoch;
        char name[32];
        if (epoch >= cfg.selection_start_epoch) {
            std::snprintf(name, sizeof(name), "ep%03d.ckpt", epoch);
        } else {
            std::snprintf(name, sizeof(name), "last.ckpt");
        }
        const std::string path = checkpoint_dir + "/" + name;
        OptimizerStates opt{&trainer.classifier_optimizer(), &trainer.adapter_optimizer(),
                            &trainer.discriminator_optimizer()};
        save_checkpoint(path, bundle, meta, opt);
        record.checkpoint_path = path;
        result.last_checkpoint_path = path;

        if (log)
            log(TrainLogRow{epoch, 0, stats.mean_loss, 0, 0, 0, 0, record.mean_entropy});
        result.history.push_back(std::move(record));
        result.epoch_stats.push_back(std::move(stats));
    }
    return result;
}

}  // namespace aada
