#ifndef GLIOGRAD_VOLUME_HPP
#define GLIOGRAD_VOLUME_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gg {

// One 3D scalar field. dims = {d, h, w}; values row-major with x fastest,
// index (z,y,x) -> (z*h + y)*w + x. spacing is mm per voxel along each axis.
struct Volume {
    std::array<int, 3> dims{0, 0, 0};
    std::array<float, 3> spacing{1.f, 1.f, 1.f};
    std::vector<float> values;

    static Volume zeros(std::array<int, 3> dims, std::array<float, 3> spacing = {1.f, 1.f, 1.f});

    int64_t numel() const { return static_cast<int64_t>(dims[0]) * dims[1] * dims[2]; }
    float& at(int z, int y, int x) {
        return values[(static_cast<size_t>(z) * dims[1] + y) * dims[2] + x];
    }
    float at(int z, int y, int x) const {
        return values[(static_cast<size_t>(z) * dims[1] + y) * dims[2] + x];
    }
    bool same_grid(const Volume& o) const { return dims == o.dims && spacing == o.spacing; }
};

enum class Modality : int { T1 = 0, T1ce = 1, T2 = 2, Flair = 3 };
inline constexpr int kNumModalities = 4;
inline constexpr const char* kModalityNames[kNumModalities] = {"t1", "t1ce", "t2", "flair"};

enum class Grade : int { GBM = 0, LGG = 1 };
const char* grade_name(Grade g);

// Classifier logits use class order [LGG, GBM]; GBM is the positive class.
inline constexpr int kClassLgg = 0;
inline constexpr int kClassGbm = 1;

struct MultiModalCase {
    std::string case_id;
    std::array<std::optional<Volume>, kNumModalities> modalities;
    std::optional<Volume> segmentation; // binary whole-tumour mask
    std::optional<Grade> grade;

    bool available(Modality m) const { return modalities[static_cast<int>(m)].has_value(); }
    const Volume& modality(Modality m) const { return *modalities[static_cast<int>(m)]; }

    // T1ce present, at least one of T2/FLAIR present, all volumes on one grid.
    void validate() const;

    // Grid of the first available modality.
    const Volume& reference_volume() const;
};

} // namespace gg

#endif
