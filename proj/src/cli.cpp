#include "crys/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

#include "crys/checkpoint.hpp"
#include "crys/dataset.hpp"
#include "crys/distill.hpp"
#include "crys/errors.hpp"

namespace crys {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid integer '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid integer '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid number '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "': invalid boolean '" + v + "'");
}

/// Registers flag-named options, then layers a flat key=value config file
/// underneath whatever the command line set explicitly.
class KeyedOpts {
public:
    explicit KeyedOpts(CLI::App* cmd) {
        cmd_ = cmd;
        cmd->add_option("--config", config_path_,
                        "flat key=value file; explicit flags take precedence");
    }

    void add(const std::string& key, int& field, const std::string& desc) {
        reg(key, field, desc, [&field, key](const std::string& v) { field = parse_int(key, v); });
    }
    void add(const std::string& key, std::uint64_t& field, const std::string& desc) {
        reg(key, field, desc, [&field, key](const std::string& v) { field = parse_u64(key, v); });
    }
    void add(const std::string& key, double& field, const std::string& desc) {
        reg(key, field, desc,
            [&field, key](const std::string& v) { field = parse_double(key, v); });
    }
    void add(const std::string& key, bool& field, const std::string& desc) {
        reg(key, field, desc, [&field, key](const std::string& v) { field = parse_bool(key, v); });
    }
    void add(const std::string& key, std::string& field, const std::string& desc) {
        reg(key, field, desc, [&field](const std::string& v) { field = v; });
    }

    /// Reads the config file (if any) and applies keys the command line
    /// left untouched. Call once after CLI11 parsing.
    void finalize() {
        if (config_path_.empty()) return;
        std::ifstream in(config_path_);
        if (!in) throw ConfigError("cannot open config file: " + config_path_);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#') continue;
            const std::size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config file " + config_path_ + ":" +
                                  std::to_string(lineno) + ": expected key=value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            auto it = entries_.find(key);
            if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
            if (it->second.opt->count() > 0) continue;
            it->second.set(value);
            it->second.from_file = true;
        }
    }

    /// Post-layering requiredness: a key must come from a flag or the file.
    void require(const std::string& key) const {
        const Entry& e = entries_.at(key);
        if (e.opt->count() == 0 && !e.from_file)
            throw UsageError("missing required flag --" + key);
    }

private:
    struct Entry {
        CLI::Option* opt = nullptr;
        std::function<void(const std::string&)> set;
        bool from_file = false;
    };

    template <class T>
    void reg(const std::string& key, T& field, const std::string& desc,
             std::function<void(const std::string&)> set) {
        Entry e;
        e.opt = cmd_->add_option("--" + key, field, desc);
        e.set = std::move(set);
        entries_.emplace(key, std::move(e));
    }

    static std::string trim(const std::string& s) {
        const std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        const std::size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    CLI::App* cmd_ = nullptr;
    std::string config_path_;
    std::map<std::string, Entry> entries_;
};

void add_adam_keys(KeyedOpts& opts, TrainConfig& c) {
    opts.add("learning_rate", c.adam.learning_rate, "Adam step size");
    opts.add("beta1", c.adam.beta1, "Adam first-moment decay");
    opts.add("beta2", c.adam.beta2, "Adam second-moment decay");
    opts.add("epsilon", c.adam.epsilon, "Adam denominator guard");
}

void add_encoder_keys(KeyedOpts& opts, TrainConfig& c) {
    opts.add("num_layers", c.encoder.num_layers, "graph convolution rounds");
    opts.add("embed_dim", c.encoder.embed_dim, "node embedding width");
}

void make_out_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw DataError("cannot create output directory " + path + ": " + ec.message());
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void run_gen_synthetic(const TrainConfig& c) {
    FeatureLayout layout;
    auto data = generate_synthetic(c.count, c.seed, layout, c.noise_sigma);
    save_dataset(data, c.out);
    std::cout << "wrote " << data.size() << " graphs to " << c.out << "\n";
}

void run_pretrain_cmd(const TrainConfig& c) {
    FeatureLayout layout;
    auto data = load_dataset(c.data, layout);

    PretrainConfig pc;
    pc.encoder = c.encoder;
    pc.encoder.feature_dim = layout.total_dim();
    pc.weights = c.weights;
    pc.adam = c.adam;
    pc.epochs = c.epochs;
    pc.batch_size = c.batch_size;
    pc.seed = c.seed;

    PretrainResult r = run_pretrain(data, pc);
    make_out_dir(c.out);
    write_pretrain_trace(r.trace, c.out + "/trace.csv");
    save_checkpoint(r.params, {layout, pc.encoder}, c.out + "/teacher.ckpt");
    if (r.aborted)
        throw NumericalError(r.abort_reason + "; last stable checkpoint and trace written to " +
                             c.out);
    const double acc = space_group_accuracy(data, r.params, pc.encoder);
    std::cout << "pretrain complete: epochs=" << r.trace.size()
              << " first_total=" << fmt17(r.trace.front().total)
              << " final_total=" << fmt17(r.trace.back().total)
              << " sg_accuracy=" << fmt17(acc) << "\n";
}

void run_distill_cmd(const TrainConfig& c) {
    DistillConfig dc;
    dc.encoder = c.encoder;
    dc.adam = c.adam;
    dc.delta = c.delta;
    dc.epochs = c.epochs;
    dc.batch_size = c.batch_size;
    dc.seed = c.seed;
    dc.teacher_path = c.teacher;
    dc.validate();

    FeatureLayout layout;
    Teacher teacher;
    const bool have_teacher = !c.teacher.empty();
    if (!have_teacher && dc.delta < 1.0)
        throw ConfigError("teacher checkpoint required when delta < 1");
    if (have_teacher) {
        LoadedCheckpoint lc = load_checkpoint(c.teacher);
        teacher.params = std::move(lc.params);
        teacher.config = lc.meta.encoder;
        layout = lc.meta.layout;
    }
    dc.encoder.feature_dim = layout.total_dim();

    auto train = load_dataset(c.train, layout);
    auto val = load_dataset(c.val, layout);
    DistillResult r = train_predictor(train, val, have_teacher ? &teacher : nullptr, dc);

    make_out_dir(c.out);
    write_distill_trace(r.trace, c.out + "/trace.csv");
    save_checkpoint(r.params, {layout, dc.encoder}, c.out + "/student.ckpt");
    if (r.aborted)
        throw NumericalError(r.abort_reason + "; last stable checkpoint and trace written to " +
                             c.out);

    std::string line = "distill complete: best_epoch=" + std::to_string(r.best_epoch) +
                       " best_val_mae=" + fmt17(r.best_val_mae);
    if (!c.test.empty()) {
        auto test = load_dataset(c.test, layout);
        line += " test_mae=" + fmt17(eval_mae(test, r.params, dc.encoder));
    }
    std::cout << line << "\n";
}

void run_eval_cmd(const TrainConfig& c) {
    LoadedCheckpoint lc = load_checkpoint(c.checkpoint);
    auto data = load_dataset(c.data, lc.meta.layout);
    std::cout << "mae=" << fmt17(eval_mae(data, lc.params, lc.meta.encoder)) << "\n";
}

void run_gradcheck_cmd(const TrainConfig& c) {
    ObjectiveGradCheck r = run_objective_gradcheck(c.seed, c.fd_epsilon, c.tolerance);
    for (const auto& [name, err] : r.pretrain.worst_by_param)
        std::cout << "pretrain " << name << " " << fmt17(err) << "\n";
    for (const auto& [name, err] : r.distill.worst_by_param)
        std::cout << "distill " << name << " " << fmt17(err) << "\n";
    std::cout << "gradcheck: pretrain_worst=" << fmt17(r.pretrain.worst_rel_error)
              << " distill_worst=" << fmt17(r.distill.worst_rel_error)
              << " tolerance=" << fmt17(c.tolerance) << " pass=" << (r.pass ? 1 : 0) << "\n";
    if (!r.pass) {
        const GradCheckReport& bad = r.pretrain.pass ? r.distill : r.pretrain;
        throw NumericalError("gradient check failed at parameter '" + bad.worst_param +
                             "': relative error " + fmt17(bad.worst_rel_error));
    }
}

std::string one_line(std::string s) {
    for (char& ch : s)
        if (ch == '\n') ch = ' ';
    return s;
}

}  // namespace

ObjectiveGradCheck run_objective_gradcheck(std::uint64_t seed, double fd_epsilon,
                                           double tolerance) {
    FeatureLayout layout;
    auto pool = generate_synthetic(40, seed, layout);
    std::vector<CrystalGraph> graphs;
    for (const auto& g : pool) {
        if (g.num_nodes >= 3 && g.num_nodes <= 6) graphs.push_back(g);
        if (graphs.size() == 6) break;
    }
    if (graphs.size() < 2) graphs.assign(pool.begin(), pool.begin() + 3);
    std::vector<const CrystalGraph*> ptrs;
    for (const auto& g : graphs) ptrs.push_back(&g);

    Rng root(seed);
    ObjectiveGradCheck result;

    {
        EncoderConfig cfg;
        cfg.num_layers = 2;
        cfg.embed_dim = 4;
        cfg.feature_dim = layout.total_dim();
        ParamStore store;
        Rng init = root.stream("init");
        init_encoder_params(store, cfg, init);
        init_decoder_heads(store, cfg, init);
        Rng neg = root.stream("negsample");
        PretrainBatch batch =
            PretrainBatch::build(std::span<const CrystalGraph* const>(ptrs), 1.0, neg);
        PretrainWeights weights;
        auto fn = [&](bool with_grad) {
            Tape tape;
            PretrainLossOut out = pretrain_loss(tape, batch, store, cfg, weights);
            const double v = out.total.scalar();
            if (with_grad) tape.backward(out.total);
            return v;
        };
        Rng check = root.stream("check-pretrain");
        result.pretrain = grad_check(store, fn, fd_epsilon, tolerance, 3, check);
    }

    {
        Teacher teacher;
        teacher.config.num_layers = 1;
        teacher.config.embed_dim = 3;
        teacher.config.feature_dim = layout.total_dim();
        Rng tinit = root.stream("teacher");
        init_encoder_params(teacher.params, teacher.config, tinit);
        std::vector<Tensor> cache = teacher_node_cache(graphs, teacher);
        std::vector<const Tensor*> blocks;
        for (const Tensor& t : cache) blocks.push_back(&t);

        EncoderConfig cfg;
        cfg.num_layers = 2;
        cfg.embed_dim = 4;
        cfg.feature_dim = layout.total_dim();
        ParamStore store;
        Rng sinit = root.stream("student");
        init_student_params(store, cfg, teacher.config.embed_dim, sinit);

        BatchedGraph batch = BatchedGraph::build(graphs);
        Tensor targets(static_cast<int>(graphs.size()), 1);
        for (std::size_t i = 0; i < graphs.size(); ++i)
            targets.at(static_cast<int>(i), 0) = *graphs[i].target;
        const double delta = 0.5;
        auto fn = [&](bool with_grad) {
            Tape tape;
            StudentForward fwd = student_forward(tape, batch, store, cfg);
            Var diff = tape.sub(fwd.yhat, tape.constant(targets));
            Var mse = tape.scale(tape.sum_all(tape.mul(diff, diff)),
                                 1.0 / static_cast<double>(graphs.size()));
            Var zs = tape.affine(fwd.z_nodes, tape.param(store.at("proj.w")),
                                 tape.param(store.at("proj.b")));
            Var kd = batched_kd_loss(tape, zs, std::span<const Tensor* const>(blocks));
            Var total = tape.add(tape.scale(mse, delta), tape.scale(kd, 1.0 - delta));
            const double v = total.scalar();
            if (with_grad) tape.backward(total);
            return v;
        };
        Rng check = root.stream("check-distill");
        result.distill = grad_check(store, fn, fd_epsilon, tolerance, 3, check);
    }

    result.pass = result.pretrain.pass && result.distill.pass;
    return result;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"crystal-graph pretraining and distillation kit"};
    app.require_subcommand(1);

    TrainConfig gen_cfg;
    CLI::App* gen = app.add_subcommand("gen-synthetic", "write a synthetic JSONL dataset");
    KeyedOpts gen_opts(gen);
    gen_opts.add("count", gen_cfg.count, "number of graphs");
    gen_opts.add("seed", gen_cfg.seed, "generator seed");
    gen_opts.add("noise_sigma", gen_cfg.noise_sigma, "target noise standard deviation");
    gen_opts.add("out", gen_cfg.out, "output JSONL path");

    TrainConfig pre_cfg;
    CLI::App* pre = app.add_subcommand("pretrain", "four-way self-supervised pre-training");
    KeyedOpts pre_opts(pre);
    pre_opts.add("data", pre_cfg.data, "training JSONL path");
    pre_opts.add("out", pre_cfg.out, "output directory (trace.csv, teacher.ckpt)");
    pre_opts.add("seed", pre_cfg.seed, "run seed");
    pre_opts.add("epochs", pre_cfg.epochs, "training epochs");
    pre_opts.add("batch_size", pre_cfg.batch_size, "graphs per minibatch");
    add_adam_keys(pre_opts, pre_cfg);
    add_encoder_keys(pre_opts, pre_cfg);
    pre_opts.add("alpha", pre_cfg.weights.alpha, "feature reconstruction weight");
    pre_opts.add("beta", pre_cfg.weights.beta, "connectivity weight");
    pre_opts.add("gamma", pre_cfg.weights.gamma, "space-group weight");
    pre_opts.add("lambda", pre_cfg.weights.lambda, "contrastive weight");
    pre_opts.add("tau", pre_cfg.weights.tau, "contrastive temperature");
    pre_opts.add("neg_ratio", pre_cfg.weights.neg_ratio, "non-edges sampled per edge");
    pre_opts.add("enable_fr", pre_cfg.weights.enable_fr, "feature reconstruction arm");
    pre_opts.add("enable_cr", pre_cfg.weights.enable_cr, "connectivity arm");
    pre_opts.add("enable_sg", pre_cfg.weights.enable_sg, "space-group arm");
    pre_opts.add("enable_ntxent", pre_cfg.weights.enable_ntxent, "contrastive arm");

    TrainConfig dis_cfg;
    dis_cfg.epochs = 500;
    CLI::App* dis = app.add_subcommand("distill", "train the property predictor (delta 1 = vanilla)");
    KeyedOpts dis_opts(dis);
    dis_opts.add("train", dis_cfg.train, "training JSONL path");
    dis_opts.add("val", dis_cfg.val, "validation JSONL path");
    dis_opts.add("test", dis_cfg.test, "optional test JSONL path");
    dis_opts.add("teacher", dis_cfg.teacher, "teacher checkpoint (required when delta < 1)");
    dis_opts.add("out", dis_cfg.out, "output directory (trace.csv, student.ckpt)");
    dis_opts.add("delta", dis_cfg.delta, "MSE weight in [0,1]");
    dis_opts.add("seed", dis_cfg.seed, "run seed");
    dis_opts.add("epochs", dis_cfg.epochs, "training epochs");
    dis_opts.add("batch_size", dis_cfg.batch_size, "graphs per minibatch");
    add_adam_keys(dis_opts, dis_cfg);
    add_encoder_keys(dis_opts, dis_cfg);

    TrainConfig eval_cfg;
    CLI::App* ev = app.add_subcommand("eval", "MAE of a student checkpoint on a dataset");
    KeyedOpts eval_opts(ev);
    eval_opts.add("data", eval_cfg.data, "evaluation JSONL path");
    eval_opts.add("checkpoint", eval_cfg.checkpoint, "student checkpoint path");

    TrainConfig gc_cfg;
    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of both objectives");
    KeyedOpts gc_opts(gc);
    gc_opts.add("seed", gc_cfg.seed, "batch seed");
    gc_opts.add("tolerance", gc_cfg.tolerance, "max accepted relative error");
    gc_opts.add("fd_epsilon", gc_cfg.fd_epsilon, "finite-difference step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[usage]: " << one_line(e.what())
                  << "; subcommands: gen-synthetic pretrain distill eval gradcheck\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            gen_opts.finalize();
            gen_opts.require("out");
            run_gen_synthetic(gen_cfg);
        } else if (pre->parsed()) {
            pre_opts.finalize();
            pre_opts.require("data");
            pre_opts.require("out");
            run_pretrain_cmd(pre_cfg);
        } else if (dis->parsed()) {
            dis_opts.finalize();
            dis_opts.require("train");
            dis_opts.require("val");
            dis_opts.require("out");
            run_distill_cmd(dis_cfg);
        } else if (ev->parsed()) {
            eval_opts.finalize();
            eval_opts.require("data");
            eval_opts.require("checkpoint");
            run_eval_cmd(eval_cfg);
        } else if (gc->parsed()) {
            gc_opts.finalize();
            run_gradcheck_cmd(gc_cfg);
        }
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "error[usage]: " << one_line(e.what()) << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error[config]: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const DimensionError& e) {
        std::cerr << "error[config]: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const StateError& e) {
        std::cerr << "error[config]: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "error[numerical]: " << one_line(e.what()) << "\n";
        return 5;
    } catch (const DataError& e) {
        std::cerr << "error[data]: " << one_line(e.what()) << "\n";
        return 4;
    } catch (const DomainError& e) {
        std::cerr << "error[data]: " << one_line(e.what()) << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << one_line(e.what()) << "\n";
        return 1;
    }
}

}  // namespace crys
