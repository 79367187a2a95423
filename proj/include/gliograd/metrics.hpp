#ifndef GLIOGRAD_METRICS_HPP
#define GLIOGRAD_METRICS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gliograd/volume.hpp"

namespace gg {

// GBM is the positive class throughout.
struct ConfusionCounts {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    int64_t total() const { return tp + fp + fn + tn; }
};

// 2|P^G| / (|P|+|G|); 1.0 when both masks are empty.
double dice(const Volume& pred, const Volume& truth);

// Mann-Whitney AUC with mid-rank tie handling:
// P(score_pos > score_neg) + 0.5 P(tie). Both classes must be present.
double auc(const std::vector<double>& scores, const std::vector<int>& is_positive);

// (tp*tn - fp*fn)/sqrt((tp+fp)(tp+fn)(tn+fp)(tn+fn)); 0 when a factor is 0.
double mcc(const ConfusionCounts& c);

double accuracy(const ConfusionCounts& c);
double sensitivity(const ConfusionCounts& c);
double specificity(const ConfusionCounts& c);

// Percentage rounded half-up to 2 decimals, e.g. 0.821923 -> "82.19".
std::string format_percent(double fraction);

struct CaseResult {
    std::string case_id;
    double p_gbm = 0.0;
    Grade predicted = Grade::LGG;
    Grade truth = Grade::LGG;
    std::optional<double> dice; // when a ground-truth segmentation exists
};

struct EvalReport {
    std::string dataset;
    ConfusionCounts counts;
    double auc = 0.0, mcc = 0.0, accuracy = 0.0, sensitivity = 0.0, specificity = 0.0;
    std::vector<CaseResult> rows;
    std::optional<double> mean_dice;

    static EvalReport from_results(const std::string& dataset, std::vector<CaseResult> rows);
};

enum class ModalityMode { All, T1ceFlair, T1ceT2 };
const char* modality_mode_name(ModalityMode m);
ModalityMode parse_modality_mode(const std::string& s);
// Channels fed to the segmentation network under this mode.
bool mode_keeps(ModalityMode m, Modality mod);

// Runs `predict` on each case (with its modality channels reduced per mode)
// and assembles the report. Threshold for the confusion counts is
// p_gbm >= 0.5 (argmax). All cases must be labeled.
EvalReport evaluate_grading(const std::string& dataset,
                            const std::vector<MultiModalCase>& cases,
                            ModalityMode mode,
                            const std::function<CaseResult(const MultiModalCase&)>& predict);

// Per-case table, then a summary block with columns
// dataset,auc,mcc,acc,sens,spec (percent, 2 decimals, half-up).
void emit_report(std::ostream& os, const EvalReport& report);

} // namespace gg

#endif
