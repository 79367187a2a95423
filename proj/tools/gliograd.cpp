// gliograd: two-stage glioma grading from multi-modal MRI volumes.
// Subcommands cover the whole workflow: synthetic data generation,
// preprocessing, segmentation/classifier training, inference, evaluation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gliograd/error.hpp"
#include "gliograd/io.hpp"
#include "gliograd/metrics.hpp"
#include "gliograd/phantom.hpp"
#include "gliograd/pipeline.hpp"
#include "gliograd/preprocess.hpp"
#include "gliograd/threading.hpp"

namespace fs = std::filesystem;
using namespace gg;

namespace {

// ---- shared option bundles ---------------------------------------------------

struct CommonOpts {
    uint64_t seed = 0;
    std::string out;
    std::string manifest;
    int threads = 0;
    int log_every = 25;
};

void add_common(CLI::App* sub, CommonOpts& o, bool needs_manifest, bool needs_out) {
    sub->set_config("--config", "", "flat key=value config file");
    sub->allow_config_extras(CLI::config_extras_mode::error);
    sub->add_option("--seed", o.seed, "RNG seed (all randomness derives from it)");
    auto* out = sub->add_option("--out", o.out, "output directory or file");
    if (needs_out) out->required();
    auto* man = sub->add_option("--manifest", o.manifest, "case manifest (csv)");
    if (needs_manifest) man->required();
    sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    sub->add_option("--log-every", o.log_every, "progress log interval in steps (stderr)");
}

std::vector<MultiModalCase> load_cases(const std::string& manifest, bool normalized) {
    const fs::path mpath(manifest);
    const auto records = load_manifest(mpath);
    std::vector<MultiModalCase> cases;
    cases.reserve(records.size());
    for (const auto& r : records) {
        MultiModalCase c = load_case(r, mpath.parent_path());
        cases.push_back(normalized ? normalize_case(c) : std::move(c));
    }
    if (cases.empty()) fail(ErrorCode::Data, "manifest " + manifest + " lists no cases");
    return cases;
}

void write_trace(const fs::path& path, const TrainTrace& trace) {
    std::ofstream os(path);
    if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
    os << "step,loss\n";
    char buf[32];
    for (size_t i = 0; i < trace.loss.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g", trace.loss[i]);
        os << i << "," << buf << "\n";
    }
}

MultiModalCase reduce_to_mode(const MultiModalCase& c, ModalityMode mode) {
    MultiModalCase reduced;
    reduced.case_id = c.case_id;
    reduced.grade = c.grade;
    reduced.segmentation = c.segmentation;
    for (int m = 0; m < kNumModalities; ++m)
        if (c.modalities[m] && mode_keeps(mode, static_cast<Modality>(m)))
            reduced.modalities[m] = c.modalities[m];
    return reduced;
}

// ---- phantom -------------------------------------------------------------------

struct PhantomOpts {
    CommonOpts common;
    int count = 20;
    int dims = 48;
    float noise = 0.05f;
};

void cmd_phantom(const PhantomOpts& o) {
    PhantomSpec base;
    base.dims = {o.dims, o.dims, o.dims};
    const float half = o.dims * 20.f / 48.f;
    base.brain_half_axes = {half, half, half};
    base.noise_sigma = o.noise;

    const auto cohort = generate_cohort(o.count, o.common.seed, base);
    const fs::path dir(o.common.out);
    std::vector<CaseRecord> records;
    records.reserve(cohort.size());
    for (const auto& c : cohort) records.push_back(write_case_ggv(dir, c));
    write_manifest(dir / "manifest.csv", records);
    std::cout << "wrote " << cohort.size() << " cases to " << dir.string() << "\n";
}

// ---- preprocess ------------------------------------------------------------------

struct PreprocessOpts {
    CommonOpts common;
    float spacing = 1.f;
};

void cmd_preprocess(const PreprocessOpts& o) {
    const fs::path mpath(o.common.manifest);
    const auto records = load_manifest(mpath);
    const fs::path dir(o.common.out);
    fs::create_directories(dir);
    const std::array<float, 3> target{o.spacing, o.spacing, o.spacing};

    std::vector<CaseRecord> out_records;
    for (const auto& rec : records) {
        MultiModalCase c = load_case(rec, mpath.parent_path());
        for (auto& m : c.modalities) {
            if (!m) continue;
            m = znormalize(resample(*m, target));
        }
        if (c.segmentation) {
            // masks resample trilinearly, then re-binarize
            Volume s = resample(*c.segmentation, target);
            for (auto& v : s.values) v = v > 0.5f ? 1.f : 0.f;
            c.segmentation = std::move(s);
        }
        out_records.push_back(write_case_ggv(dir, c));
    }
    write_manifest(dir / "manifest.csv", out_records);
    std::cout << "preprocessed " << out_records.size() << " cases to " << dir.string() << "\n";
}

// ---- train-seg -------------------------------------------------------------------

struct TrainSegCliOpts {
    CommonOpts common;
    int steps = 1000;
    int batch = 2;
    int patch = 32;
    int levels = 4;
    int base_features = 25;
    float lr = 1e-4f;
    float weight_decay = 1e-5f;
    float stop_dice = 0.f;
    int ckpt_every = 500;
    bool no_dropout = false;
};

UNetConfig seg_config(const TrainSegCliOpts& o) {
    UNetConfig cfg;
    cfg.levels = o.levels;
    cfg.base_features = o.base_features;
    cfg.patch_size = o.patch;
    cfg.batch_size = o.batch;
    return cfg;
}

void cmd_train_seg(const TrainSegCliOpts& o) {
    const auto cases = load_cases(o.common.manifest, true);
    UNet net = UNet::build(seg_config(o), o.common.seed);

    TrainSegOptions topt;
    topt.steps = o.steps;
    topt.seed = o.common.seed;
    topt.checkpoint_every = o.ckpt_every;
    topt.stop_dice = o.stop_dice;
    topt.dropout_enabled = !o.no_dropout;
    topt.optimizer.learning_rate = o.lr;
    topt.optimizer.weight_decay = o.weight_decay;
    const int log_every = std::max(1, o.common.log_every);
    topt.on_step = [&](int step, float loss) {
        if ((step + 1) % log_every == 0)
            std::fprintf(stderr, "train-seg step=%d loss=%.6f\n", step + 1, loss);
    };

    const fs::path dir(o.common.out);
    fs::create_directories(dir);
    auto sink = [&](int step) {
        char name[64];
        std::snprintf(name, sizeof(name), "seg_step%06d.ggc", step);
        save_checkpoint(dir / name, net.params);
    };
    const TrainTrace trace = train_segmentation(net, cases, topt, sink);
    save_checkpoint(dir / "seg.ggc", net.params);
    write_trace(dir / "seg_trace.csv", trace);
    std::cout << "trained " << trace.steps_run << " steps, checkpoint "
              << (dir / "seg.ggc").string() << "\n";
}

// ---- train-cls -------------------------------------------------------------------

struct TrainClsCliOpts {
    CommonOpts common;
    int steps = 1000;
    int batch = 8;
    int size = 32;
    float lr = 1e-3f;
    float momentum = 0.9f;
    float weight_decay = 1e-5f;
    float stop_acc = 0.f;
    int ckpt_every = 500;
    bool no_augment = false;
    std::string masks; // optional predicted-mask directory
};

void cmd_train_cls(const TrainClsCliOpts& o) {
    const auto cases = load_cases(o.common.manifest, true);
    ClassifierConfig cfg;
    cfg.input_size = o.size;
    cfg.batch_size = o.batch;
    Classifier net = Classifier::build(cfg, o.common.seed);

    std::vector<RoiSample> dataset;
    for (const auto& c : cases) {
        const Volume* mask = nullptr;
        Volume loaded;
        if (!o.masks.empty()) {
            loaded = read_volume(fs::path(o.masks) / (c.case_id + "_mask.ggv"));
            mask = &loaded;
        } else {
            if (!c.segmentation)
                fail(ErrorCode::Data, "train-cls: case " + c.case_id +
                                          " has no segmentation (needed for the ROI)");
            mask = &*c.segmentation;
        }
        dataset.push_back(make_roi_sample(c, *mask, cfg));
    }

    TrainClsOptions topt;
    topt.steps = o.steps;
    topt.seed = o.common.seed;
    topt.checkpoint_every = o.ckpt_every;
    topt.stop_accuracy = o.stop_acc;
    topt.augment_enabled = !o.no_augment;
    topt.optimizer.learning_rate = o.lr;
    topt.optimizer.momentum = o.momentum;
    topt.optimizer.weight_decay = o.weight_decay;
    const int log_every = std::max(1, o.common.log_every);
    topt.on_step = [&](int step, float loss) {
        if ((step + 1) % log_every == 0)
            std::fprintf(stderr, "train-cls step=%d loss=%.6f\n", step + 1, loss);
    };

    const fs::path dir(o.common.out);
    fs::create_directories(dir);
    auto sink = [&](int step) {
        char name[64];
        std::snprintf(name, sizeof(name), "cls_step%06d.ggc", step);
        save_checkpoint(dir / name, net.params);
    };
    const TrainTrace trace = train_classifier(net, dataset, topt, sink);
    save_checkpoint(dir / "cls.ggc", net.params);
    write_trace(dir / "cls_trace.csv", trace);
    std::cout << "trained " << trace.steps_run << " steps, checkpoint "
              << (dir / "cls.ggc").string() << "\n";
}

// ---- segment ---------------------------------------------------------------------

struct SegmentOpts {
    CommonOpts common;
    std::string checkpoint;
    int patch = 32;
    int levels = 4;
    int base_features = 25;
    std::string mode = "all";
};

UNet load_unet(const std::string& checkpoint, int patch, int levels, int base_features) {
    UNetConfig cfg;
    cfg.levels = levels;
    cfg.base_features = base_features;
    cfg.patch_size = patch;
    UNet net = UNet::build(cfg, 0);
    load_checkpoint(checkpoint, net.params);
    return net;
}

void cmd_segment(const SegmentOpts& o) {
    const ModalityMode mode = parse_modality_mode(o.mode);
    const auto cases = load_cases(o.common.manifest, true);
    UNet net = load_unet(o.checkpoint, o.patch, o.levels, o.base_features);

    const fs::path dir(o.common.out);
    fs::create_directories(dir);
    for (const auto& c : cases) {
        const SegmentationResult r = segment_volume(reduce_to_mode(c, mode), net);
        write_ggv(dir / (c.case_id + "_mask.ggv"), r.mask);
        write_ggv(dir / (c.case_id + "_prob.ggv"), r.prob);
        std::fprintf(stderr, "segment %s done\n", c.case_id.c_str());
    }
    std::cout << "segmented " << cases.size() << " cases to " << dir.string() << "\n";
}

// ---- grade -----------------------------------------------------------------------

struct GradeOpts {
    CommonOpts common;
    std::string seg_ckpt;
    std::string cls_ckpt;
    std::string masks;
    std::string mode = "all";
    int patch = 32;
    int levels = 4;
    int base_features = 25;
    int size = 32;
};

void write_predictions(const fs::path& path, const std::vector<CaseResult>& rows) {
    std::ofstream os(path);
    if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
    os << "case_id,p_gbm,label\n";
    char buf[32];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f", r.p_gbm);
        os << r.case_id << "," << buf << "," << grade_name(r.predicted) << "\n";
    }
}

std::vector<CaseResult> run_grading(const GradeOpts& o) {
    const ModalityMode mode = parse_modality_mode(o.mode);
    if (o.masks.empty() && o.seg_ckpt.empty())
        fail(ErrorCode::Config, "grade: need --seg-ckpt or --masks");
    const auto cases = load_cases(o.common.manifest, true);
    Classifier cls = [&] {
        ClassifierConfig cfg;
        cfg.input_size = o.size;
        Classifier net = Classifier::build(cfg, 0);
        load_checkpoint(o.cls_ckpt, net.params);
        return net;
    }();

    std::optional<UNet> seg;
    if (o.masks.empty())
        seg = load_unet(o.seg_ckpt, o.patch, o.levels, o.base_features);

    std::vector<CaseResult> rows;
    for (const auto& c : cases) {
        CaseResult r;
        if (!o.masks.empty()) {
            const Volume mask = read_volume(fs::path(o.masks) / (c.case_id + "_mask.ggv"));
            r = predict_case(c, nullptr, cls, &mask);
        } else {
            r = predict_case(reduce_to_mode(c, mode), &*seg, cls);
        }
        if (c.grade) r.truth = *c.grade;
        rows.push_back(std::move(r));
        std::fprintf(stderr, "grade %s -> %s (p_gbm=%.4f)\n", r.case_id.c_str(),
                     grade_name(r.predicted), r.p_gbm);
    }
    return rows;
}

void cmd_grade(const GradeOpts& o) {
    const auto rows = run_grading(o);
    if (o.common.out.empty()) {
        write_predictions("/dev/stdout", rows);
    } else {
        write_predictions(o.common.out, rows);
    }
}

// ---- eval ------------------------------------------------------------------------

struct EvalOpts {
    CommonOpts common;
    std::string predictions;
    std::string masks;
    std::string dataset = "dataset";
};

std::vector<CaseResult> read_predictions(const fs::path& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorCode::Io, "cannot open predictions: " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind("case_id,p_gbm,label", 0) != 0)
        fail(ErrorCode::Data, "predictions " + path.string() + ": bad header");
    std::vector<CaseResult> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, p, label;
        std::getline(ss, id, ',');
        std::getline(ss, p, ',');
        std::getline(ss, label, ',');
        CaseResult r;
        r.case_id = id;
        r.p_gbm = std::stod(p);
        if (label == "GBM") r.predicted = Grade::GBM;
        else if (label == "LGG") r.predicted = Grade::LGG;
        else fail(ErrorCode::Data, "predictions: bad label `" + label + "` for " + id);
        out.push_back(std::move(r));
    }
    return out;
}

EvalReport build_report(const EvalOpts& o) {
    const fs::path mpath(o.common.manifest);
    const auto records = load_manifest(mpath);
    auto rows = read_predictions(o.predictions);

    for (auto& r : rows) {
        const CaseRecord* rec = nullptr;
        for (const auto& cand : records)
            if (cand.case_id == r.case_id) rec = &cand;
        if (!rec) fail(ErrorCode::Data, "prediction for unknown case " + r.case_id);
        if (!rec->grade) fail(ErrorCode::Data, "case " + r.case_id + " has no grade label");
        r.truth = *rec->grade;
        if (!o.masks.empty() && !rec->seg_path.empty()) {
            const Volume pred = read_volume(fs::path(o.masks) / (r.case_id + "_mask.ggv"));
            const Volume truth = read_volume(mpath.parent_path() / rec->seg_path);
            r.dice = dice(pred, truth);
        }
    }
    return EvalReport::from_results(o.dataset, std::move(rows));
}

void cmd_eval(const EvalOpts& o) {
    const EvalReport report = build_report(o);
    if (o.common.out.empty()) {
        emit_report(std::cout, report);
    } else {
        std::ofstream os(o.common.out);
        if (!os) fail(ErrorCode::Io, "cannot write " + o.common.out);
        emit_report(os, report);
    }
}

// ---- pipeline ----------------------------------------------------------------------

struct PipelineOpts {
    GradeOpts grade;
    std::string dataset = "dataset";
};

void cmd_pipeline(const PipelineOpts& o) {
    const fs::path dir(o.grade.common.out);
    fs::create_directories(dir / "masks");

    SegmentOpts so;
    so.common = o.grade.common;
    so.common.out = (dir / "masks").string();
    so.checkpoint = o.grade.seg_ckpt;
    so.patch = o.grade.patch;
    so.levels = o.grade.levels;
    so.base_features = o.grade.base_features;
    so.mode = o.grade.mode;
    cmd_segment(so);

    GradeOpts go = o.grade;
    go.masks = (dir / "masks").string();
    const auto rows = run_grading(go);
    write_predictions(dir / "predictions.csv", rows);

    EvalOpts eo;
    eo.common = o.grade.common;
    eo.common.out = (dir / "report.csv").string();
    eo.predictions = (dir / "predictions.csv").string();
    eo.masks = (dir / "masks").string();
    eo.dataset = o.dataset;
    cmd_eval(eo);

    std::ifstream is(dir / "report.csv");
    std::cout << is.rdbuf();
}

std::string valid_keys(const CLI::App* sub) {
    std::string keys;
    for (const CLI::Option* opt : sub->get_options()) {
        std::string name = opt->get_lnames().empty() ? "" : opt->get_lnames()[0];
        if (name.empty() || name == "help" || name == "config") continue;
        if (!keys.empty()) keys += ", ";
        keys += name;
    }
    return keys;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gliograd: 3D U-Net tumour segmentation + GBM/LGG grading"};
    app.require_subcommand(1);

    PhantomOpts po;
    auto* sp = app.add_subcommand("phantom", "generate synthetic multi-modal cases");
    add_common(sp, po.common, false, true);
    sp->add_option("--count", po.count, "number of cases");
    sp->add_option("--dims", po.dims, "cubic volume edge in voxels");
    sp->add_option("--noise", po.noise, "gaussian noise sigma");

    PreprocessOpts ppo;
    auto* spp = app.add_subcommand("preprocess", "resample to target spacing and z-normalize");
    add_common(spp, ppo.common, true, true);
    spp->add_option("--spacing", ppo.spacing, "target voxel spacing (mm, isotropic)");

    TrainSegCliOpts tso;
    auto* sts = app.add_subcommand("train-seg", "train the segmentation U-Net");
    add_common(sts, tso.common, true, true);
    sts->add_option("--steps", tso.steps, "training steps");
    sts->add_option("--batch", tso.batch, "batch size");
    sts->add_option("--patch", tso.patch, "patch edge length");
    sts->add_option("--levels", tso.levels, "U-Net resolution levels");
    sts->add_option("--base-features", tso.base_features, "features at highest resolution");
    sts->add_option("--lr", tso.lr, "ADAM learning rate (constant; the paper-style lr_init)");
    sts->add_option("--weight-decay", tso.weight_decay, "L2 weight decay");
    sts->add_option("--stop-dice", tso.stop_dice, "early stop at running batch dice (0 = off)");
    sts->add_option("--ckpt-every", tso.ckpt_every, "periodic checkpoint interval (0 = off)");
    sts->add_flag("--no-dropout", tso.no_dropout, "disable modality dropout");

    TrainClsCliOpts tco;
    auto* stc = app.add_subcommand("train-cls", "train the grading classifier");
    add_common(stc, tco.common, true, true);
    stc->add_option("--steps", tco.steps, "training steps");
    stc->add_option("--batch", tco.batch, "batch size (balanced halves)");
    stc->add_option("--size", tco.size, "classifier input edge length");
    stc->add_option("--lr", tco.lr, "SGD learning rate");
    stc->add_option("--momentum", tco.momentum, "SGD momentum");
    stc->add_option("--weight-decay", tco.weight_decay, "L2 weight decay");
    stc->add_option("--stop-acc", tco.stop_acc, "early stop at running batch accuracy (0 = off)");
    stc->add_option("--ckpt-every", tco.ckpt_every, "periodic checkpoint interval (0 = off)");
    stc->add_flag("--no-augment", tco.no_augment, "disable augmentation");
    stc->add_option("--masks", tco.masks, "extract ROIs from predicted masks in this directory");

    SegmentOpts so;
    auto* ss = app.add_subcommand("segment", "whole-tumour segmentation inference");
    add_common(ss, so.common, true, true);
    ss->add_option("--checkpoint", so.checkpoint, "segmentation checkpoint")->required();
    ss->add_option("--patch", so.patch, "window edge length");
    ss->add_option("--levels", so.levels, "U-Net resolution levels");
    ss->add_option("--base-features", so.base_features, "features at highest resolution");
    ss->add_option("--mode", so.mode, "modality mode: all | t1ce+flair | t1ce+t2");

    GradeOpts go;
    auto* sg = app.add_subcommand("grade", "two-stage GBM/LGG prediction");
    add_common(sg, go.common, true, false);
    sg->add_option("--seg-ckpt", go.seg_ckpt, "segmentation checkpoint");
    sg->add_option("--cls-ckpt", go.cls_ckpt, "classifier checkpoint")->required();
    sg->add_option("--masks", go.masks, "precomputed mask directory (skips segmentation)");
    sg->add_option("--mode", go.mode, "modality mode: all | t1ce+flair | t1ce+t2");
    sg->add_option("--patch", go.patch, "segmentation window edge length");
    sg->add_option("--levels", go.levels, "U-Net resolution levels");
    sg->add_option("--base-features", go.base_features, "features at highest resolution");
    sg->add_option("--size", go.size, "classifier input edge length");

    EvalOpts eo;
    auto* se = app.add_subcommand("eval", "evaluation report from predictions");
    add_common(se, eo.common, true, false);
    se->add_option("--predictions", eo.predictions, "predictions csv from `grade`")->required();
    se->add_option("--masks", eo.masks, "predicted mask directory (adds dice)");
    se->add_option("--dataset", eo.dataset, "dataset name in the summary row");

    PipelineOpts plo;
    auto* spl = app.add_subcommand("pipeline", "segment + grade + eval in one run");
    add_common(spl, plo.grade.common, true, true);
    spl->add_option("--seg-ckpt", plo.grade.seg_ckpt, "segmentation checkpoint")->required();
    spl->add_option("--cls-ckpt", plo.grade.cls_ckpt, "classifier checkpoint")->required();
    spl->add_option("--mode", plo.grade.mode, "modality mode: all | t1ce+flair | t1ce+t2");
    spl->add_option("--patch", plo.grade.patch, "segmentation window edge length");
    spl->add_option("--levels", plo.grade.levels, "U-Net resolution levels");
    spl->add_option("--base-features", plo.grade.base_features, "features at highest resolution");
    spl->add_option("--size", plo.grade.size, "classifier input edge length");
    spl->add_option("--dataset", plo.dataset, "dataset name in the summary row");

    CLI::App* chosen = nullptr;
    try {
        app.parse(argc, argv);
        chosen = app.get_subcommands().front();
        const CommonOpts* common = nullptr;
        if (chosen == sp) common = &po.common;
        else if (chosen == spp) common = &ppo.common;
        else if (chosen == sts) common = &tso.common;
        else if (chosen == stc) common = &tco.common;
        else if (chosen == ss) common = &so.common;
        else if (chosen == sg) common = &go.common;
        else if (chosen == se) common = &eo.common;
        else common = &plo.grade.common;
        if (common->threads > 0) set_num_threads(common->threads);

        if (chosen == sp) cmd_phantom(po);
        else if (chosen == spp) cmd_preprocess(ppo);
        else if (chosen == sts) cmd_train_seg(tso);
        else if (chosen == stc) cmd_train_cls(tco);
        else if (chosen == ss) cmd_segment(so);
        else if (chosen == sg) cmd_grade(go);
        else if (chosen == se) cmd_eval(eo);
        else cmd_pipeline(plo);
    } catch (const CLI::ConfigError& e) {
        const auto subs = app.get_subcommands();
        const CLI::App* scope = subs.empty() ? &app : subs.front();
        std::cerr << "error: code=2 msg=\"" << e.what()
                  << "; valid keys: " << valid_keys(scope) << "\"\n";
        return 2;
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: code=2 msg=\"" << e.what() << "\"\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: code=" << e.exit_code() << " msg=\"" << e.what() << "\"\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: code=3 msg=\"" << e.what() << "\"\n";
        return 3;
    }
    return 0;
}
