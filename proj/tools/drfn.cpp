// drfn: corpus generation, training, DSM fine-tuning, evaluation, prediction.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drfn/io/image.hpp"
#include "drfn/synthdoc/synthdoc.hpp"
#include "drfn/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace drfn;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kMissing = 3, kIncompatible = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Global {
    std::uint64_t seed = 0;
    std::string preset = "tiny";
    bool preset_given = false;
    unsigned threads = 1;
};

struct GenArgs {
    std::size_t n = 0;
    std::string out;
    std::string corpus = "shift0";
    int size = 0;
};

struct Resolution {
    std::size_t height = 0, width = 0;
};

struct TrainArgs {
    std::string data, out, log, epoch_log;
    std::size_t epochs = 30, batch = 8;
    double lr = kPretrainLr;
    std::size_t size = 0;
    double hflip = 0.5, vflip = 0.5, crop = 0.7;
};

struct FinetuneArgs {
    std::string from, data, out, log;
    std::size_t steps = 200, batch = 8;
    double lr = kFinetuneLr;
    std::size_t size = 0;
    bool no_dsm = false;
    double hflip = 0.5, vflip = 0.5, crop = 0.7;
};

struct EvalArgs {
    std::vector<std::string> models, labels;
    std::string data, csv;
    int classes = 4;
    bool oracle = false;
};

struct PredictArgs {
    std::string model, image, out, raw_out;
};

void require_file(const std::string& path, const char* what)
{
    if (!fs::is_regular_file(path)) throw MissingArtifact(std::string(what) + " not found: " + path);
}

void require_dir(const std::string& path, const char* what)
{
    if (!fs::is_directory(path)) throw MissingArtifact(std::string(what) + " not found: " + path);
}

void require_parent(const std::string& path)
{
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) throw UsageError("output directory does not exist: " + parent.string());
}

std::size_t default_size(const std::string& preset) { return preset == "full" ? 256 : 64; }

AugmentConfig make_augment(double hflip, double vflip, double crop, std::size_t size)
{
    AugmentConfig a{hflip, vflip, crop, size, size};
    try {
        a.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return a;
}

std::string with_suffix(const std::string& path, const std::string& suffix)
{
    fs::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

int cmd_gen_data(const Global& g, const GenArgs& a)
{
    synthdoc::CorpusConfig cfg;
    try {
        cfg = synthdoc::CorpusConfig::preset(a.corpus);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (a.size) cfg.page_height = cfg.page_width = a.size;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto m = synthdoc::generate_dataset(a.n, g.seed, cfg, a.out, g.threads);
    std::cout << "wrote " << m.samples.size() << " samples to " << a.out << "\n";
    return kOk;
}

int cmd_train(const Global& g, TrainArgs a)
{
    require_dir(a.data, "dataset");
    require_parent(a.out);
    if (a.epochs == 0 || a.batch == 0 || !(a.lr > 0)) throw UsageError("--epochs, --batch and --lr must be positive");
    if (!a.size) a.size = default_size(g.preset);
    TrainOptions opt;
    opt.epochs = a.epochs;
    opt.batch_size = a.batch;
    opt.lr = a.lr;
    opt.seed = g.seed;
    opt.augment = make_augment(a.hflip, a.vflip, a.crop, a.size);
    if (a.log.empty()) a.log = with_suffix(a.out, ".log.csv");
    if (a.epoch_log.empty()) a.epoch_log = with_suffix(a.out, ".epochs.csv");

    DRFN model(ModelConfig::preset(g.preset), g.seed);
    const auto data = load_dataset(a.data, model.config().num_classes);
    if (data.empty()) throw UsageError("dataset is empty: " + a.data);
    const auto run = train(model, data, opt, [](const StepLog& s) {
        if (s.step % 25 == 0) std::cerr << "step " << s.step << " epoch " << s.epoch << " loss " << s.loss << " acc " << s.acc << "\n";
    });
    save_checkpoint(a.out, model, &run.optimizer);
    std::ostringstream steps, epochs;
    write_step_csv(steps, run.log);
    write_epoch_csv(epochs, run.log);
    write_text(a.log, steps.str());
    write_text(a.epoch_log, epochs.str());
    std::cout << "trained " << run.log.steps.size() << " steps; checkpoint " << a.out << "\n";
    return kOk;
}

int cmd_finetune(const Global& g, FinetuneArgs a)
{
    require_file(a.from, "checkpoint");
    require_dir(a.data, "dataset");
    require_parent(a.out);
    if (a.batch == 0 || !(a.lr > 0)) throw UsageError("--batch and --lr must be positive");
    const Checkpoint pre = load_checkpoint(a.from);
    const ModelConfig config = g.preset_given ? ModelConfig::preset(g.preset) : pre.config;
    if (!a.size) a.size = default_size(config.same_structure(ModelConfig::full()) ? "full" : "tiny");
    FinetuneOptions opt;
    opt.steps = a.steps;
    opt.batch_size = a.batch;
    opt.lr = a.lr;
    opt.seed = g.seed;
    opt.use_dsm = !a.no_dsm;
    opt.augment = make_augment(a.hflip, a.vflip, a.crop, a.size);
    if (a.log.empty()) a.log = with_suffix(a.out, ".log.csv");

    const auto data = load_dataset(a.data, config.num_classes);
    if (data.empty()) throw UsageError("dataset is empty: " + a.data);
    auto ft = finetune_with_dsm(pre, config, data, opt, [](const StepLog& s) {
        if (s.step % 25 == 0) std::cerr << "step " << s.step << " loss " << s.loss << " acc " << s.acc << "\n";
    });
    save_checkpoint(a.out, ft.model, &ft.run.optimizer);
    std::ostringstream steps;
    write_step_csv(steps, ft.run.log, opt.use_dsm);
    write_text(a.log, steps.str());
    std::cout << "fine-tuned " << ft.run.log.steps.size() << " steps (" << (opt.use_dsm ? "DSM" : "plain")
              << "); checkpoint " << a.out << "\n";
    return kOk;
}

int cmd_eval(const Global& g, const EvalArgs& a)
{
    require_dir(a.data, "dataset");
    if (a.models.empty() && !a.oracle) throw UsageError("eval needs at least one --model");
    if (!a.labels.empty() && a.labels.size() != a.models.size())
        throw UsageError("--label must be given once per --model");
    for (const auto& m : a.models) require_file(m, "checkpoint");
    if (!a.csv.empty()) require_parent(a.csv);

    EvalOptions opt;
    opt.fold_text_into_background = a.classes == 3;
    opt.threads = g.threads;
    std::vector<Checkpoint> ckpts;
    for (const auto& m : a.models) ckpts.push_back(load_checkpoint(m));
    const auto data = load_dataset(a.data);
    if (data.empty()) throw UsageError("dataset is empty: " + a.data);

    std::vector<ReportRow> rows;
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
        DRFN model = model_from_checkpoint(ckpts[i]);
        rows.push_back({a.labels.empty() ? fs::path(a.models[i]).stem().string() : a.labels[i], evaluate(model, data, opt)});
    }
    if (a.oracle) {
        const Predictor truth = [](const Sample& s) { return s.mask; };
        rows.push_back({"oracle", compute_metrics(evaluate_confusion(truth, data, 4, opt))});
    }
    print_report_table(std::cout, rows);
    if (!a.csv.empty()) {
        std::ostringstream os;
        write_report_csv(os, rows, class_names(opt));
        write_text(a.csv, os.str());
    }
    return kOk;
}

int cmd_predict(const Global&, const PredictArgs& a)
{
    require_file(a.model, "checkpoint");
    require_parent(a.out);
    if (!a.raw_out.empty()) require_parent(a.raw_out);
    Image8 img;
    try {
        img = read_png(a.image);
    } catch (const IoError& e) {
        throw UsageError(std::string("cannot read image: ") + e.what());
    }
    if (img.channels == 1) {
        Image8 rgb(img.width, img.height, 3);
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            for (std::size_t c = 0; c < 3; ++c) rgb.pixels[i * 3 + c] = img.pixels[i];
        img = std::move(rgb);
    }
    DRFN model = model_from_checkpoint(load_checkpoint(a.model));
    const auto labels = predict_labels(model, image_to_tensor(img));

    static constexpr std::uint8_t palette[4][3] = {{0, 0, 0}, {255, 0, 0}, {0, 255, 0}, {0, 0, 255}};
    Image8 color(img.width, img.height, 3), raw(img.width, img.height, 1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) color.pixels[i * 3 + c] = palette[labels[i]][c];
        raw.pixels[i] = static_cast<std::uint8_t>(labels[i]);
    }
    write_png(a.out, color);
    if (!a.raw_out.empty()) write_png(a.raw_out, raw);
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"DRFN document page segmentation"};
    app.require_subcommand(1);
    app.fallthrough();

    Global g;
    app.add_option("--seed", g.seed, "random seed")->capture_default_str();
    auto* preset_opt = app.add_option("--preset", g.preset, "model preset")->check(CLI::IsMember({"tiny", "full"}))->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads for data generation and evaluation")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "render a synthetic corpus");
    gen_cmd->add_option("--n", gen.n, "number of samples")->required();
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--preset", gen.corpus, "corpus style")->check(CLI::IsMember({"shift0", "shift1"}))->capture_default_str();
    gen_cmd->add_option("--size", gen.size, "page side in pixels (default 64)")->check(CLI::PositiveNumber);

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "pretrain a single-path network");
    train_cmd->add_option("--data", tr.data, "training corpus directory")->required();
    train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
    train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
    train_cmd->add_option("--batch", tr.batch)->capture_default_str();
    train_cmd->add_option("--lr", tr.lr)->capture_default_str();
    train_cmd->add_option("--size", tr.size, "train resolution (default 64 tiny, 256 full)");
    train_cmd->add_option("--hflip", tr.hflip)->capture_default_str();
    train_cmd->add_option("--vflip", tr.vflip)->capture_default_str();
    train_cmd->add_option("--crop", tr.crop, "crop side ratio")->capture_default_str();
    train_cmd->add_option("--log", tr.log, "per-step CSV (default <out>.log.csv)");
    train_cmd->add_option("--epoch-log", tr.epoch_log, "per-epoch CSV (default <out>.epochs.csv)");

    FinetuneArgs ft;
    auto* ft_cmd = app.add_subcommand("finetune", "fine-tune a pretrained checkpoint, with DSM by default");
    ft_cmd->add_option("--from", ft.from, "pretrained checkpoint")->required();
    ft_cmd->add_option("--data", ft.data, "fine-tuning corpus directory")->required();
    ft_cmd->add_option("--out", ft.out, "checkpoint path")->required();
    ft_cmd->add_option("--steps", ft.steps)->capture_default_str();
    ft_cmd->add_option("--batch", ft.batch)->capture_default_str();
    ft_cmd->add_option("--lr", ft.lr)->capture_default_str();
    ft_cmd->add_option("--size", ft.size, "train resolution");
    ft_cmd->add_option("--hflip", ft.hflip)->capture_default_str();
    ft_cmd->add_option("--vflip", ft.vflip)->capture_default_str();
    ft_cmd->add_option("--crop", ft.crop)->capture_default_str();
    ft_cmd->add_flag("--no-dsm", ft.no_dsm, "plain fine-tuning of the single-path network");
    ft_cmd->add_option("--log", ft.log, "per-step CSV with mean S_t per block (default <out>.log.csv)");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "score checkpoints on a corpus");
    eval_cmd->add_option("--data", ev.data, "evaluation corpus directory")->required();
    eval_cmd->add_option("--model", ev.models, "checkpoint (repeatable, one table row each)");
    eval_cmd->add_option("--label", ev.labels, "row label per --model");
    eval_cmd->add_option("--classes", ev.classes, "4, or 3 to fold text into background")->check(CLI::IsMember({3, 4}))->capture_default_str();
    eval_cmd->add_option("--csv", ev.csv, "also write the report as CSV");
    eval_cmd->add_flag("--oracle", ev.oracle, "add a row that replays the ground truth");

    PredictArgs pr;
    auto* pred_cmd = app.add_subcommand("predict", "write a colorized segmentation of one image");
    pred_cmd->add_option("--model", pr.model)->required();
    pred_cmd->add_option("--image", pr.image)->required();
    pred_cmd->add_option("--out", pr.out, "color PNG")->required();
    pred_cmd->add_option("--raw-out", pr.raw_out, "class-index PNG");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    g.preset_given = preset_opt->count() > 0;

    try {
        if (*gen_cmd) return cmd_gen_data(g, gen);
        if (*train_cmd) return cmd_train(g, tr);
        if (*ft_cmd) return cmd_finetune(g, ft);
        if (*eval_cmd) return cmd_eval(g, ev);
        if (*pred_cmd) return cmd_predict(g, pr);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissing;
    } catch (const CheckpointIncompatible& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIncompatible;
    } catch (const UnsupportedCheckpointVersion& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIncompatible;
    } catch (const CheckpointFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIncompatible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
