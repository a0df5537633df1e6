#pragma once

#include <functional>
#include <optional>
#include <string>

#include "aada/checkpoint.hpp"
#include "aada/data.hpp"
#include "aada/evaluation.hpp"
#include "aada/losses.hpp"
#include "aada/networks.hpp"
#include "aada/optim.hpp"
#include "aada/selection.hpp"

namespace aada {

enum class SupervisedLoss { ace, ce, focal };

struct SourceTrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    int epochs = 50;
    int iterations_per_epoch = 2500;
    int batch = 4;
    double kappa = 4.0;
    SupervisedLoss loss = SupervisedLoss::ace;
    double focal_gamma = 2.0;
    AugmentConfig augment;

    void validate() const;
};

struct DAConfig {
    double adam_lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    LossWeights lw;  // omega_t = omega_g = 2, rho = 4
    int epochs = 50;
    int iterations_per_epoch = 2500;
    int batch = 4;
    int selection_start_epoch = 25;
    int jitter_max_shift = 4;
    AugmentConfig augment;
    double entropy_tile_fraction = 1.0;
    bool eval_target_f1 = false;  // per-epoch diagnostics; target labels stay out of training

    void validate() const;
};

/// CSV schema: epoch,iter,L_sup,L_sup_ST,L_advA,L_advD,L_reg,mean_entropy?
/// iter 0 marks the epoch summary row (the only row carrying an entropy).
struct TrainLogRow {
    int epoch = 0;
    int iter = 0;
    double l_sup = 0.0, l_sup_st = 0.0, l_adv_a = 0.0, l_adv_d = 0.0, l_reg = 0.0;
    std::optional<double> mean_entropy;
};
using LogSink = std::function<void(const TrainLogRow&)>;
std::string log_row_csv(const TrainLogRow& row);

struct EpochStats {
    int epoch = 0;
    ConfusionMatrix train_confusion;
    std::vector<double> ious;
    ClassWeights weights_used;  // constant within the epoch, derived from the previous one
    double mean_loss = 0.0;
};

struct SourceTrainResult {
    std::vector<EpochStats> history;
};

/// Supervised source training. Epoch 1 runs plain cross-entropy; later epochs
/// weight Eq.-style losses with ACE weights recomputed from the previous
/// epoch's training confusion (argmax of the training forward passes).
SourceTrainResult source_train(nets::Classifier& classifier, const DomainDataset& source,
                               const SourceTrainConfig& cfg, RngStream& rng,
                               SgdMomentum* optimizer = nullptr, const LogSink& log = {});

/// Training-mode context implementing the running-statistics policy: only the
/// transformed stream may update batch-norm running averages.
inline nn::FwdCtx bn_policy_ctx(bool source_pass) { return {true, !source_pass}; }

/// Integer shift drawn uniformly from {0..max_shift} per axis (reflection
/// padding at the trailing edge), then the standard radiometric jitter.
Tensor discriminator_input_jitter(const Tensor& bchw, RngStream& rng, int max_shift = 4,
                                  double sigma = 0.1);

/// One adversarial adaptation run, driven in two alternating sub-steps per
/// iteration so the update-exclusivity contract is observable:
///   joint_step: gradient of omega_t*L_sup_ST + L_sup + omega_g*L_advA
///               updates adapter (Adam) and classifier (SGD); D frozen.
///   disc_step:  gradient of L_advD + rho*L_reg on the same iteration's
///               jittered transformed batch and a fresh target batch;
///               updates the discriminator only.
class DATrainer {
public:
    DATrainer(ModelBundle& bundle, const DomainDataset& source, const DomainDataset& target,
              const DAConfig& cfg, const SourceTrainConfig& source_cfg, RngStream& rng);

    struct StepLosses {
        double l_sup = 0.0, l_sup_st = 0.0, l_adv_a = 0.0, l_adv_d = 0.0, l_reg = 0.0;
    };

    StepLosses joint_step();
    void disc_step(StepLosses& losses);
    StepLosses iteration() {
        StepLosses l = joint_step();
        disc_step(l);
        return l;
    }

    /// Recomputes ACE weights from this epoch's transformed-stream confusion
    /// and emits the saturation warning if the discriminator pinned its
    /// output for the whole epoch.
    EpochStats end_epoch();

    const ClassWeights& current_weights() const { return weights_; }
    SgdMomentum& classifier_optimizer() { return opt_c_; }
    Adam& adapter_optimizer() { return opt_a_; }
    Adam& discriminator_optimizer() { return opt_d_; }

private:
    ModelBundle& bundle_;
    const DomainDataset& source_;
    const DomainDataset& target_;
    DAConfig cfg_;
    RngStream& rng_;
    std::vector<nn::Var> params_c_, params_a_, params_d_;
    SgdMomentum opt_c_;
    Adam opt_a_, opt_d_;
    ClassWeights weights_;
    ConfusionMatrix epoch_cm_;
    int epoch_ = 1;
    double sat_sum_ = 0.0;
    int64_t sat_count_ = 0;
    double loss_sum_ = 0.0;
    int64_t loss_count_ = 0;
    Tensor last_xst_;  // transformed batch handed from joint_step to disc_step
};

struct DATrainResult {
    std::vector<CheckpointRecord> history;
    std::vector<EpochStats> epoch_stats;
    std::string last_checkpoint_path;
};

/// Full adaptation schedule: per-epoch checkpointing (every epoch from
/// selection_start_epoch on, a rolling last.ckpt before that), entropy
/// evaluation from selection_start_epoch, optional per-epoch target F1.
DATrainResult da_train(ModelBundle& bundle, const DomainDataset& source,
                       const DomainDataset& target, const DAConfig& cfg,
                       const SourceTrainConfig& source_cfg, const CheckpointMeta& meta_base,
                       const std::string& checkpoint_dir, RngStream& rng,
                       const LogSink& log = {});

}  // namespace aada
