#include "drfn/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "drfn/ops.hpp"

namespace drfn {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kAugmentStream = 0x4147;

void fisher_yates(std::vector<std::size_t>& v, CounterRng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)));
        std::swap(v[i - 1], v[j]);
    }
}

std::vector<int> argmax_channels(const Tensor& logits, std::size_t n)
{
    const std::size_t K = logits.dim(1), HW = logits.dim(2) * logits.dim(3);
    std::vector<int> out(HW);
    const double* base = logits.ptr() + n * K * HW;
    for (std::size_t i = 0; i < HW; ++i) {
        int best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (base[k * HW + i] > base[best * HW + i]) best = static_cast<int>(k);
        out[i] = best;
    }
    return out;
}

struct LoopOptions {
    std::size_t batch_size;
    double lr;
    std::uint64_t seed;
    AugmentConfig augment;
    std::size_t epochs;     // 0 = unbounded
    std::size_t max_steps;  // 0 = unbounded
};

TrainRun run_loop(DRFN& model, const std::vector<Sample>& data, const LoopOptions& opt,
                  const std::function<void(const StepLog&)>& on_step)
{
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    // train-mode BN on the 1x1 image-pool features needs two samples per batch
    if (opt.batch_size < 2) throw std::invalid_argument("train: batch size must be at least 2");
    if (data.size() < 2) throw std::invalid_argument("train: need at least 2 samples");
    if (!(opt.lr > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
    opt.augment.validate();

    TrainRun r;
    r.optimizer.lr = opt.lr;
    CounterRng shuffle_rng(opt.seed, kShuffleStream);
    CounterRng aug_rng(opt.seed, kAugmentStream);
    std::vector<std::size_t> order(data.size());
    const auto trainable = model.trainable_parameters();

    std::size_t step = 0;
    for (std::size_t epoch = 1; opt.epochs == 0 || epoch <= opt.epochs; ++epoch) {
        if (opt.max_steps && step >= opt.max_steps) break;
        std::iota(order.begin(), order.end(), std::size_t{0});
        fisher_yates(order, shuffle_rng);
        double loss_sum = 0.0;
        std::uint64_t correct = 0, counted = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0, end = 0; start < order.size(); start = end) {
            if (opt.max_steps && step >= opt.max_steps) break;
            end = std::min(order.size(), start + opt.batch_size);
            if (order.size() - end == 1) end = order.size();  // no batch of one
            std::vector<Sample> aug;
            aug.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) aug.push_back(augment(data[order[i]], opt.augment, aug_rng));
            std::vector<const Sample*> ptrs;
            for (const auto& s : aug) ptrs.push_back(&s);
            const std::vector<int> labels = stack_masks(ptrs);

            Tape t;
            ForwardTrace trace;
            Var logits = model.forward(t, t.constant(stack_images(ptrs)), Mode::train, &trace);
            Var loss = cross_entropy_loss(logits, labels, kIgnoreLabel);
            model.zero_grad();
            t.backward(loss);
            adam_step(r.optimizer, trainable);
            ++step;

            StepLog s;
            s.step = step;
            s.epoch = epoch;
            s.loss = loss.value().item();
            std::uint64_t c = 0, n = 0;
            const std::size_t HW = logits.value().dim(2) * logits.value().dim(3);
            for (std::size_t b = 0; b < ptrs.size(); ++b) {
                const auto pred = argmax_channels(logits.value(), b);
                for (std::size_t i = 0; i < HW; ++i) {
                    const int y = labels[b * HW + i];
                    if (y == kIgnoreLabel) continue;
                    ++n;
                    c += pred[i] == y;
                }
            }
            s.acc = n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
            for (std::size_t k = 0; k < 4; ++k) s.mean_select[k] = trace.blocks[k].mean_select_trainable;
            r.log.steps.push_back(s);
            if (on_step) on_step(s);

            loss_sum += s.loss;
            correct += c;
            counted += n;
            ++batches;
        }
        if (batches)
            r.log.epochs.push_back({epoch, loss_sum / static_cast<double>(batches),
                                    counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0});
    }
    return r;
}

}  // namespace

TrainRun train(DRFN& model, const std::vector<Sample>& data, const TrainOptions& opt,
               const std::function<void(const StepLog&)>& on_step)
{
    if (opt.epochs == 0 && opt.max_steps == 0) throw std::invalid_argument("train: epochs must be positive");
    return run_loop(model, data, {opt.batch_size, opt.lr, opt.seed, opt.augment, opt.epochs, opt.max_steps}, on_step);
}

TrainRun train(DRFN& model, const std::filesystem::path& dataset_dir, const TrainOptions& opt)
{
    opt.augment.validate();
    return train(model, load_dataset(dataset_dir, model.config().num_classes), opt);
}

FinetuneRun finetune_with_dsm(const Checkpoint& pretrained, const ModelConfig& config, const std::vector<Sample>& data,
                              const FinetuneOptions& opt, const std::function<void(const StepLog&)>& on_step)
{
    if (pretrained.config.dsm_enabled)
        throw CheckpointIncompatible("config.dsm_enabled", "fine-tuning expects a single-path pretrained checkpoint");
    if (!pretrained.config.same_structure(config))
        throw CheckpointIncompatible("config", "checkpoint structure differs from the requested model config");
    DRFN base = model_from_checkpoint(pretrained);
    FinetuneRun out{opt.use_dsm ? init_finetune(std::move(base), opt.seed) : std::move(base), {}};
    if (opt.steps > 0)
        out.run = run_loop(out.model, data, {opt.batch_size, opt.lr, opt.seed, opt.augment, 0, opt.steps}, on_step);
    else
        out.run.optimizer.lr = opt.lr;
    return out;
}

void write_step_csv(std::ostream& os, const TrainLog& log, bool with_select)
{
    os << "step,loss,acc";
    if (with_select) os << ",s_t_ds1,s_t_ds2,s_t_ds3,s_t_ds4";
    os << '\n';
    char buf[64];
    for (const auto& s : log.steps) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g", s.step, s.loss, s.acc);
        os << buf;
        if (with_select)
            for (double v : s.mean_select) {
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                os << buf;
            }
        os << '\n';
    }
}

void write_epoch_csv(std::ostream& os, const TrainLog& log)
{
    os << "epoch,loss,acc\n";
    char buf[96];
    for (const auto& e : log.epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.epoch, e.loss, e.acc);
        os << buf;
    }
}

std::vector<int> predict_labels(DRFN& model, const Tensor& image, double pad_value)
{
    if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("predict: expected a 3 x H x W image");
    const std::size_t H = image.dim(1), W = image.dim(2);
    Sample s{image, std::vector<int>(H * W, 0)};
    const Sample p = pad_sample(s, 16, pad_value);
    const std::size_t PH = p.height(), PW = p.width();
    const Tensor logits = model.infer(p.image.reshaped({1, 3, PH, PW}));
    const auto full = argmax_channels(logits, 0);
    std::vector<int> out(H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) out[y * W + x] = full[y * PW + x];
    return out;
}

std::vector<std::string> class_names(const EvalOptions& opt)
{
    if (opt.fold_text_into_background) return {"background", "figure", "table"};
    return {"background", "figure", "text", "table"};
}

ConfusionMatrix evaluate_confusion(const Predictor& predict, const std::vector<Sample>& data, std::size_t num_classes,
                                   const EvalOptions& opt)
{
    if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
    // 4-class index -> 3-class index (text -> background)
    auto fold = [&](int c) {
        if (!opt.fold_text_into_background || c == kIgnoreLabel) return c;
        return c == 2 ? 0 : (c == 3 ? 2 : c);
    };
    const std::size_t K = opt.fold_text_into_background ? 3 : num_classes;

    const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(data.size())));
    std::vector<ConfusionMatrix> partial(threads, ConfusionMatrix(K));
    std::vector<std::exception_ptr> errors(threads);
    auto work = [&](unsigned w) {
        try {
            for (std::size_t i = w; i < data.size(); i += threads) {
                const Sample& s = data[i];
                const auto pred = predict(s);
                if (pred.size() != s.mask.size()) throw std::runtime_error("evaluate: prediction size mismatch");
                for (std::size_t p = 0; p < pred.size(); ++p) {
                    const int y = fold(s.mask[p]);
                    if (y == kIgnoreLabel) continue;
                    partial[w].add(y, fold(pred[p]));
                }
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (unsigned w = 1; w < threads; ++w) partial[0].merge(partial[w]);
    return partial[0];
}

MetricsReport evaluate(DRFN& model, const std::vector<Sample>& data, const EvalOptions& opt)
{
    const Predictor predict = [&](const Sample& s) { return predict_labels(model, s.image, opt.pad_value); };
    return compute_metrics(evaluate_confusion(predict, data, model.config().num_classes, opt));
}

MetricsReport evaluate(DRFN& model, const std::filesystem::path& dataset_dir, const EvalOptions& opt)
{
    return evaluate(model, load_dataset(dataset_dir, model.config().num_classes), opt);
}

}  // namespace drfn
