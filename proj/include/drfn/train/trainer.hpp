#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "drfn/model/network.hpp"
#include "drfn/train/adam.hpp"
#include "drfn/train/checkpoint.hpp"
#include "drfn/train/data.hpp"
#include "drfn/train/metrics.hpp"

namespace drfn {

inline constexpr double kPretrainLr = 1e-3;
inline constexpr double kFinetuneLr = 1e-4;

struct TrainOptions {
    std::size_t epochs = 1;
    std::size_t batch_size = 8;
    double lr = kPretrainLr;
    std::uint64_t seed = 0;
    AugmentConfig augment;
    // stop after this many optimizer steps; 0 = run all epochs
    std::size_t max_steps = 0;
};

struct StepLog {
    std::size_t step = 0;  // 1-based optimizer step
    std::size_t epoch = 0;
    double loss = 0.0;
    double acc = 0.0;  // pixel accuracy of the training batch
    std::array<double, 4> mean_select{};  // per-block batch mean S_t (0.5 without DSM)
};

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    double acc = 0.0;
};

struct TrainLog {
    std::vector<StepLog> steps;
    std::vector<EpochLog> epochs;
};

struct TrainRun {
    TrainLog log;
    AdamState optimizer;
};

// Mean pixel cross-entropy over the trainable parameters, batches drawn in a
// per-epoch shuffle from the seeded stream. Deterministic in (model, data, options).
TrainRun train(DRFN& model, const std::vector<Sample>& data, const TrainOptions& opt,
               const std::function<void(const StepLog&)>& on_step = {});
TrainRun train(DRFN& model, const std::filesystem::path& dataset_dir, const TrainOptions& opt);

struct FinetuneOptions {
    std::size_t steps = 200;
    std::size_t batch_size = 8;
    double lr = kFinetuneLr;
    std::uint64_t seed = 0;
    AugmentConfig augment;
    // false: plain fine-tuning of the single-path network
    bool use_dsm = true;
};

struct FinetuneRun {
    DRFN model;
    TrainRun run;
};

// Restores `pretrained` (which must be a single-path checkpoint whose structure
// matches `config`), arms DSM via init_finetune when requested and trains
// `steps` optimizer steps.
FinetuneRun finetune_with_dsm(const Checkpoint& pretrained, const ModelConfig& config, const std::vector<Sample>& data,
                              const FinetuneOptions& opt, const std::function<void(const StepLog&)>& on_step = {});

void write_step_csv(std::ostream& os, const TrainLog& log, bool with_select = false);
void write_epoch_csv(std::ostream& os, const TrainLog& log);

struct EvalOptions {
    // 3-class background/figure/table evaluation: text is scored as background
    bool fold_text_into_background = false;
    unsigned threads = 1;
    double pad_value = 1.0;
};

// Argmax labels at the input's native size (padded internally to /16).
std::vector<int> predict_labels(DRFN& model, const Tensor& image, double pad_value = 1.0);

using Predictor = std::function<std::vector<int>(const Sample&)>;

ConfusionMatrix evaluate_confusion(const Predictor& predict, const std::vector<Sample>& data, std::size_t num_classes,
                                   const EvalOptions& opt = {});
MetricsReport evaluate(DRFN& model, const std::vector<Sample>& data, const EvalOptions& opt = {});
MetricsReport evaluate(DRFN& model, const std::filesystem::path& dataset_dir, const EvalOptions& opt = {});

std::vector<std::string> class_names(const EvalOptions& opt);

}  // namespace drfn
