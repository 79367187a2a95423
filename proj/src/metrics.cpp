#include "gliograd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "gliograd/error.hpp"

namespace gg {

double dice(const Volume& pred, const Volume& truth) {
    if (pred.dims != truth.dims)
        fail(ErrorCode::Data, "dice: mask dims differ");
    int64_t p = 0, g = 0, pg = 0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const bool a = pred.values[i] != 0.f;
        const bool b = truth.values[i] != 0.f;
        p += a;
        g += b;
        pg += a && b;
    }
    if (p + g == 0) return 1.0; // both empty
    return 2.0 * static_cast<double>(pg) / static_cast<double>(p + g);
}

double auc(const std::vector<double>& scores, const std::vector<int>& is_positive) {
    if (scores.size() != is_positive.size())
        fail(ErrorCode::Data, "auc: score/label count mismatch");
    int64_t npos = 0, nneg = 0;
    for (int l : is_positive) (l ? npos : nneg)++;
    if (npos == 0 || nneg == 0)
        fail(ErrorCode::Data, "auc: undefined, both classes must be present");

    // Mann-Whitney with mid-rank ties: AUC = (R+ - n+(n+1)/2) / (n+ n-)
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    double rank_pos_sum = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        // ranks are 1-based; tied block [i, j] shares the mid-rank
        const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t t = i; t <= j; ++t)
            if (is_positive[order[t]]) rank_pos_sum += mid;
        i = j + 1;
    }
    return (rank_pos_sum - 0.5 * static_cast<double>(npos) * (npos + 1)) /
           (static_cast<double>(npos) * static_cast<double>(nneg));
}

double mcc(const ConfusionCounts& c) {
    const double f1 = static_cast<double>(c.tp + c.fp);
    const double f2 = static_cast<double>(c.tp + c.fn);
    const double f3 = static_cast<double>(c.tn + c.fp);
    const double f4 = static_cast<double>(c.tn + c.fn);
    if (f1 == 0 || f2 == 0 || f3 == 0 || f4 == 0) return 0.0;
    const double num = static_cast<double>(c.tp) * c.tn - static_cast<double>(c.fp) * c.fn;
    return num / std::sqrt(f1 * f2 * f3 * f4);
}

double accuracy(const ConfusionCounts& c) {
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double sensitivity(const ConfusionCounts& c) {
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double specificity(const ConfusionCounts& c) {
    return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

std::string format_percent(double fraction) {
    // half-up at the 2nd decimal of the percentage
    const double pct = fraction * 100.0;
    const double rounded = std::floor(pct * 100.0 + 0.5) / 100.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", rounded);
    return buf;
}

EvalReport EvalReport::from_results(const std::string& dataset, std::vector<CaseResult> rows) {
    if (rows.empty()) fail(ErrorCode::Data, "evaluation requires at least one case");
    EvalReport r;
    r.dataset = dataset;
    r.rows = std::move(rows);

    std::vector<double> scores;
    std::vector<int> labels;
    double dice_sum = 0.0;
    int64_t dice_n = 0;
    for (const auto& row : r.rows) {
        const bool truth_pos = row.truth == Grade::GBM;
        const bool pred_pos = row.predicted == Grade::GBM;
        if (truth_pos && pred_pos) r.counts.tp++;
        else if (!truth_pos && pred_pos) r.counts.fp++;
        else if (truth_pos && !pred_pos) r.counts.fn++;
        else r.counts.tn++;
        scores.push_back(row.p_gbm);
        labels.push_back(truth_pos ? 1 : 0);
        if (row.dice) {
            dice_sum += *row.dice;
            ++dice_n;
        }
    }
    r.auc = gg::auc(scores, labels);
    r.mcc = gg::mcc(r.counts);
    r.accuracy = gg::accuracy(r.counts);
    r.sensitivity = gg::sensitivity(r.counts);
    r.specificity = gg::specificity(r.counts);
    if (dice_n > 0) r.mean_dice = dice_sum / static_cast<double>(dice_n);
    return r;
}

const char* modality_mode_name(ModalityMode m) {
    switch (m) {
        case ModalityMode::All: return "all";
        case ModalityMode::T1ceFlair: return "t1ce+flair";
        case ModalityMode::T1ceT2: return "t1ce+t2";
    }
    return "?";
}

ModalityMode parse_modality_mode(const std::string& s) {
    if (s == "all") return ModalityMode::All;
    if (s == "t1ce+flair") return ModalityMode::T1ceFlair;
    if (s == "t1ce+t2") return ModalityMode::T1ceT2;
    fail(ErrorCode::Config, "unknown modality mode `" + s + "`; valid: all, t1ce+flair, t1ce+t2");
}

bool mode_keeps(ModalityMode m, Modality mod) {
    switch (m) {
        case ModalityMode::All: return true;
        case ModalityMode::T1ceFlair: return mod == Modality::T1ce || mod == Modality::Flair;
        case ModalityMode::T1ceT2: return mod == Modality::T1ce || mod == Modality::T2;
    }
    return true;
}

EvalReport evaluate_grading(const std::string& dataset,
                            const std::vector<MultiModalCase>& cases,
                            ModalityMode mode,
                            const std::function<CaseResult(const MultiModalCase&)>& predict) {
    if (cases.empty()) fail(ErrorCode::Data, "evaluate_grading: empty case list");
    std::vector<CaseResult> rows;
    rows.reserve(cases.size());
    for (const auto& c : cases) {
        if (!c.grade) fail(ErrorCode::Data, "case " + c.case_id + " has no grade label");
        MultiModalCase reduced;
        reduced.case_id = c.case_id;
        reduced.grade = c.grade;
        reduced.segmentation = c.segmentation;
        for (int m = 0; m < kNumModalities; ++m) {
            if (c.modalities[m] && mode_keeps(mode, static_cast<Modality>(m)))
                reduced.modalities[m] = c.modalities[m];
        }
        // Mode reduction must not strip a case below the inclusion criteria;
        // the excluded channels are simply absent (fed as zeros downstream).
        CaseResult row = predict(reduced);
        row.case_id = c.case_id;
        row.truth = *c.grade;
        rows.push_back(std::move(row));
    }
    return EvalReport::from_results(dataset, std::move(rows));
}

void emit_report(std::ostream& os, const EvalReport& r) {
    os << "case_id,p_gbm,label,truth";
    bool any_dice = false;
    for (const auto& row : r.rows) any_dice = any_dice || row.dice.has_value();
    if (any_dice) os << ",dice";
    os << "\n";
    char buf[64];
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof(buf), "%.6f", row.p_gbm);
        os << row.case_id << "," << buf << "," << grade_name(row.predicted) << ","
           << grade_name(row.truth);
        if (any_dice) {
            if (row.dice) {
                std::snprintf(buf, sizeof(buf), "%.6f", *row.dice);
                os << "," << buf;
            } else {
                os << ",";
            }
        }
        os << "\n";
    }
    os << "dataset,auc,mcc,acc,sens,spec\n";
    os << r.dataset << "," << format_percent(r.auc) << "," << format_percent(r.mcc) << ","
       << format_percent(r.accuracy) << "," << format_percent(r.sensitivity) << ","
       << format_percent(r.specificity) << "\n";
    if (r.mean_dice) {
        std::snprintf(buf, sizeof(buf), "%.6f", *r.mean_dice);
        os << "mean_dice," << buf << "\n";
    }
}

} // namespace gg
