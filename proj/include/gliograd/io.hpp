#ifndef GLIOGRAD_IO_HPP
#define GLIOGRAD_IO_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gliograd/nn.hpp"
#include "gliograd/tensor.hpp"
#include "gliograd/volume.hpp"

namespace gg {

// NIfTI-1, uncompressed single-file subset: magic "n+1\0", little-endian,
// dim[0] == 3, datatype uint8/int16/float32. Values are scaled by
// scl_slope/scl_inter when scl_slope != 0; spacing comes from pixdim[1..3].
Volume read_nifti(const std::filesystem::path& path);

// Native volume format GGV1: magic, u32 dims[3], f32 spacing[3], f32 payload.
void write_ggv(const std::filesystem::path& path, const Volume& v);
Volume read_ggv(const std::filesystem::path& path);

// Reads .nii via the NIfTI parser, anything else as GGV.
Volume read_volume(const std::filesystem::path& path);

// Checkpoint format GGC1: magic, u32 tensor count; per tensor u16 name length,
// name, u8 rank, u32 dims[rank], f32 payload. Bit-exact round trip.
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
// Names and shapes must match the destination ParamSet exactly.
void load_checkpoint(const std::filesystem::path& path, ParamSet& params);
// Raw listing, for tools/tests.
std::vector<std::pair<std::string, Tensor>> read_checkpoint_tensors(const std::filesystem::path& path);

// Manifest: comma-separated, header row `case_id,t1,t1ce,t2,flair,seg,grade`,
// empty cell = missing. Volume paths are relative to the manifest directory.
struct CaseRecord {
    std::string case_id;
    std::array<std::string, kNumModalities> modality_paths; // empty = missing
    std::string seg_path;                                   // empty = missing
    std::optional<Grade> grade;
};

std::vector<CaseRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<CaseRecord>& records);

// Loads the referenced volumes; rel_base is the manifest directory.
MultiModalCase load_case(const CaseRecord& rec, const std::filesystem::path& rel_base);

// Writes each present volume of the case as GGV next to `dir`, returning the
// manifest row (paths relative to dir).
CaseRecord write_case_ggv(const std::filesystem::path& dir, const MultiModalCase& c);

} // namespace gg

#endif
