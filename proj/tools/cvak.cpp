// cvak — generate datasets, train, sweep attacks, run oracle suites.
//
// Exit codes: 0 success, 1 runtime or check failure, 2 usage error.

#include "cvak/cvak.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cvak;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, ',');) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw FormatError(FormatError::Code::io, "cannot write " + path.string());
    }
}

std::string manifest_path(const std::string& artifact) { return artifact + ".manifest.json"; }

/// Common manifest fields; the caller adds config, inputs and outputs.
json manifest(const std::string& command, const std::vector<std::string>& argv, std::uint64_t seed)
{
    json m;
    m["command"] = command;
    m["argv"] = argv;
    m["version"] = version;
    m["seed"] = seed;
    m["seed_scheme"] = "derive_seed(root, purpose, index) = splitmix64(splitmix64(root ^ fnv1a(purpose)) + index)";
    return m;
}

void finish(json& m, const fs::path& path, std::chrono::steady_clock::time_point start)
{
    m["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(path, m.dump(2) + "\n");
}

json attack_json(const AttackConfig& a)
{
    return {{"family", std::string(to_string(a.family))}, {"epsilon", a.epsilon}, {"alpha", a.alpha},
            {"beta", a.beta}, {"steps", a.steps}, {"random_start", a.random_start}};
}

// ---------------------------------------------------------------------------

struct GenArgs {
    std::size_t classes = 4;
    std::string info = "phase";
    double noise = 0.0;
    double amplitude = 1.0;
    std::size_t samples = 100;
    std::size_t size = 8;
    std::uint64_t seed = 0;
    std::string out;
};

/// Writes the training split to --out and the test split next to it.
std::string test_split_path(const std::string& out)
{
    fs::path p(out);
    return (p.parent_path() / (p.stem().string() + ".test" + p.extension().string())).string();
}

int cmd_gen(const GenArgs& a, const std::vector<std::string>& argv)
{
    const auto start = std::chrono::steady_clock::now();
    const auto info = parse_information(a.info);
    if (!info) {
        throw UsageError("gen: --info must be phase, magnitude or both");
    }
    DatasetConfig c;
    c.classes = a.classes;
    c.samples_per_class = a.samples;
    c.height = c.width = a.size;
    c.information = *info;
    c.noise = a.noise;
    c.amplitude = a.amplitude;
    c.seed = a.seed;
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const auto split = generate_synthetic(c);
    const std::string test = test_split_path(a.out);
    save_dataset(a.out, split.train);
    save_dataset(test, split.test);

    json m = manifest("gen", argv, a.seed);
    m["config"] = {{"classes", c.classes}, {"information", a.info}, {"noise", c.noise}, {"amplitude", c.amplitude},
                   {"samples_per_class", c.samples_per_class}, {"height", c.height}, {"width", c.width}};
    m["outputs"] = {a.out, test};
    finish(m, manifest_path(a.out), start);
    std::cout << "wrote " << a.out << " (" << split.train.size() << " samples) and " << test << " ("
              << split.test.size() << " samples)\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string model = "cvnn";
    std::string encoding = "reim";
    std::string data;
    int epochs = 30;
    double lr = 1e-2;
    std::string optimizer = "adam";
    std::size_t batch = 32;
    std::optional<double> adv_eps;
    std::string adv_attack = "cifgsm";
    double input_scale = 1.0;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv)
{
    const auto start = std::chrono::steady_clock::now();
    const auto kind = parse_model_kind(a.model);
    const auto enc = parse_encoding(a.encoding);
    if (!kind || !enc) {
        throw UsageError("train: --model must be rvnn or cvnn, --encoding reim or magphase");
    }
    const LabeledBatch data = load_dataset(a.data);

    ModelConfig mc;
    mc.kind = *kind;
    mc.encoding = *enc;
    mc.channels = data.images.dim(1);
    mc.height = data.images.dim(2);
    mc.width = data.images.dim(3);
    mc.classes = data.classes;
    mc.input_scale = a.input_scale;
    mc.seed = derive_seed(a.seed, "model-init");

    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.learning_rate = a.lr;
    tc.batch_size = a.batch;
    tc.optimizer = a.optimizer == "sgd" ? Optimizer::sgd : Optimizer::adam;
    tc.seed = derive_seed(a.seed, "train");
    if (a.adv_eps) {
        const auto spec = AttackSpec::parse(a.adv_attack);
        if (!spec || spec->kind != AttackKind::unrestricted) {
            throw UsageError("train: --adv-attack must be one of cfgsm, cffgsm, cifgsm, cmifgsm");
        }
        tc.adversarial = spec->config(*a.adv_eps);
    }
    try {
        mc.validate();
        tc.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }

    const auto result = train(build_model(mc), data, tc);
    save_checkpoint(a.out, result.model);

    json m = manifest("train", argv, a.seed);
    m["config"] = {{"model", a.model},
                   {"encoding", a.encoding},
                   {"input_scale", mc.input_scale},
                   {"conv_channels", mc.conv_channels},
                   {"hidden", mc.hidden},
                   {"epochs", tc.epochs},
                   {"learning_rate", tc.learning_rate},
                   {"optimizer", a.optimizer},
                   {"batch_size", tc.batch_size},
                   {"adversarial", tc.adversarial ? attack_json(*tc.adversarial) : json(nullptr)}};
    m["seeds"] = {{"model_init", mc.seed}, {"train", tc.seed}};
    m["inputs"] = {a.data};
    m["outputs"] = {a.out};
    m["loss_history"] = result.loss_history;
    m["train_accuracy"] = accuracy(result.model, data.images, data.labels);
    finish(m, manifest_path(a.out), start);
    std::cout << "wrote " << a.out << " (" << result.model.parameter_count() << " parameters";
    if (!result.loss_history.empty()) {
        std::cout << ", final loss " << result.loss_history.back();
    }
    std::cout << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    std::vector<std::string> models;
    std::string data;
    std::string attacks;
    std::string eps_grid;
    int steps = 10;
    double beta = 1.0;
    std::uint64_t seed = 0;
    std::string out;
};

bool adversarially_trained(const std::string& checkpoint)
{
    std::ifstream in(manifest_path(checkpoint));
    if (!in) {
        return false;
    }
    const json m = json::parse(in, nullptr, false);
    return !m.is_discarded() && m.contains("config") && m["config"].contains("adversarial")
           && !m["config"]["adversarial"].is_null();
}

int cmd_sweep(const SweepArgs& a, const std::vector<std::string>& argv)
{
    const auto start = std::chrono::steady_clock::now();
    std::vector<AttackSpec> specs;
    if (a.attacks.empty()) {
        specs = all_attacks(a.steps, a.beta);
    }
    for (const auto& name : split_list(a.attacks)) {
        auto spec = AttackSpec::parse(name);
        if (!spec) {
            std::string valid;
            for (const auto& n : attack_names()) {
                valid += (valid.empty() ? "" : ", ") + n;
            }
            throw UsageError("sweep: unknown attack '" + name + "'; valid names: " + valid);
        }
        spec->steps = a.steps;
        spec->beta = a.beta;
        specs.push_back(*spec);
    }
    std::vector<double> grid;
    if (a.eps_grid.empty()) {
        grid = default_epsilon_grid();
    }
    for (const auto& item : split_list(a.eps_grid)) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
        }
        if (used != item.size() || !(v >= 0.0) || !std::isfinite(v)) {
            throw UsageError("sweep: bad epsilon '" + item + "'");
        }
        grid.push_back(v);
    }
    if (!std::is_sorted(grid.begin(), grid.end()) || std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
        throw UsageError("sweep: --eps-grid must be strictly increasing");
    }

    const LabeledBatch test = load_dataset(a.data);
    fs::create_directories(a.out);
    const fs::path dir(a.out);

    std::vector<RobustnessCurve> all;
    json outputs = json::array();
    json seeds = json::object();
    for (const auto& path : a.models) {
        const Model model = load_checkpoint(path);
        const std::string id = fs::path(path).stem().string();
        const bool adv = adversarially_trained(path);
        std::vector<RobustnessCurve> curves;
        for (const auto& spec : specs) {
            // Seeded by model and attack only, so subsets of a sweep reproduce the full run.
            const std::uint64_t seed = derive_seed(derive_seed(a.seed, id), spec.name());
            auto c = evaluate_robustness(model, test, spec, grid, seed);
            c.model_id = id;
            c.adversarially_trained = adv;
            seeds[id][spec.name()] = seed;
            curves.push_back(std::move(c));
        }
        const fs::path svg = dir / (id + ".svg");
        write_text(svg, curves_svg(id + (adv ? " (adversarially trained)" : ""), curves));
        outputs.push_back(svg.string());
        all.insert(all.end(), curves.begin(), curves.end());
    }
    const fs::path csv = dir / "robustness.csv";
    write_text(csv, curves_csv(all));
    const auto summary = compare_curves(all);
    write_text(dir / "summary.txt", summary.to_text());
    outputs.push_back(csv.string());
    outputs.push_back((dir / "summary.txt").string());

    json m = manifest("sweep", argv, a.seed);
    json names = json::array();
    for (const auto& s : specs) {
        names.push_back(s.name());
    }
    m["config"] = {{"attacks", names}, {"epsilon_grid", grid}, {"steps", a.steps}, {"beta", a.beta},
                   {"chunk", SweepOptions{}.chunk}};
    m["seeds"] = seeds;
    json inputs = a.models;
    inputs.push_back(a.data);
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    finish(m, dir / "manifest.json", start);
    std::cout << summary.to_text();
    return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
    std::string suite;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    bool json_mode = false;
};

int cmd_verify(const VerifyArgs& a)
{
    if (a.trials == 0) {
        throw UsageError("verify: --trials must be >= 1");
    }
    std::vector<verify::OracleReport> reports;
    if (a.suite == "gradients") {
        reports.push_back(verify::check_primitive_gradients(a.trials, derive_seed(a.seed, "primitives")));
        reports.push_back(verify::check_model_gradients(a.trials, derive_seed(a.seed, "models")));
    } else if (a.suite == "sets") {
        for (const double eps : {0.01, 0.7, 2.5}) {
            reports.push_back(verify::check_set_equivalence(eps, a.trials, derive_seed(a.seed, "sets")));
        }
    } else if (a.suite == "optimality") {
        reports.push_back(verify::check_linear_optimality(AttackKind::unrestricted, a.trials,
                                                          derive_seed(a.seed, "cfgsm")));
        reports.push_back(verify::check_linear_optimality(AttackKind::phase, a.trials, derive_seed(a.seed, "pfgsm")));
        reports.push_back(
            verify::check_linear_optimality(AttackKind::magnitude, a.trials, derive_seed(a.seed, "magnitude")));
    } else {
        throw UsageError("verify: --suite must be gradients, sets or optimality");
    }
    bool ok = true;
    for (const auto& r : reports) {
        std::cout << (a.json_mode ? r.to_json() : r.to_text()) << '\n';
        ok = ok && r.passed();
    }
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"cvak: adversarial attacks on complex-valued networks"};
    app.set_version_flag("--version", std::string(version));
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate a synthetic complex dataset");
    g->add_option("--classes", gen.classes, "number of classes")->check(CLI::Range(2, 1 << 16));
    g->add_option("--info", gen.info, "where the class lives: phase, magnitude or both");
    g->add_option("--noise", gen.noise, "complex noise RMS")->check(CLI::NonNegativeNumber);
    g->add_option("--amplitude", gen.amplitude, "nominal pixel magnitude")->check(CLI::PositiveNumber);
    g->add_option("--samples", gen.samples, "samples per class")->check(CLI::PositiveNumber);
    g->add_option("--size", gen.size, "image height and width")->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed);
    g->add_option("--out", gen.out, "training split; the test split goes to <stem>.test<ext>")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train a model, optionally adversarially");
    t->add_option("--model", tr.model, "rvnn or cvnn");
    t->add_option("--encoding", tr.encoding, "rvnn input encoding: reim or magphase");
    t->add_option("--data", tr.data, "training dataset")->required();
    t->add_option("--epochs", tr.epochs)->check(CLI::NonNegativeNumber);
    t->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
    t->add_option("--optimizer", tr.optimizer)->check(CLI::IsMember({"sgd", "adam"}));
    t->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
    t->add_option("--adv-eps", tr.adv_eps, "train on attacked batches with this budget")->check(CLI::PositiveNumber);
    t->add_option("--adv-attack", tr.adv_attack, "unrestricted attack used for adversarial training");
    t->add_option("--input-scale", tr.input_scale, "fixed input multiplier")->check(CLI::PositiveNumber);
    t->add_option("--seed", tr.seed);
    t->add_option("--out", tr.out, "checkpoint path")->required();

    SweepArgs sw;
    auto* s = app.add_subcommand("sweep", "robustness curves over an epsilon grid");
    s->add_option("--model", sw.models, "checkpoint(s); repeat for several models")->required();
    s->add_option("--data", sw.data, "test dataset")->required();
    s->add_option("--attacks", sw.attacks, "comma-separated attack names (default: all)");
    s->add_option("--eps-grid", sw.eps_grid, "comma-separated epsilons (default: 0,1e-4,...,5e-2)");
    s->add_option("--steps", sw.steps, "iterations of iterative attacks")->check(CLI::PositiveNumber);
    s->add_option("--beta", sw.beta, "momentum decay")->check(CLI::Range(0.0, 1.0));
    s->add_option("--seed", sw.seed);
    s->add_option("--out", sw.out, "output directory")->required();

    VerifyArgs ve;
    auto* v = app.add_subcommand("verify", "run an oracle suite");
    v->add_option("--suite", ve.suite)->required()->check(CLI::IsMember({"gradients", "sets", "optimality"}));
    v->add_option("--trials", ve.trials)->required();
    v->add_option("--seed", ve.seed);
    v->add_flag("--json", ve.json_mode, "one JSON line per sub-check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*g) {
            return cmd_gen(gen, args);
        }
        if (*t) {
            return cmd_train(tr, args);
        }
        if (*s) {
            return cmd_sweep(sw, args);
        }
        return cmd_verify(ve);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
