#include "gliograd/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "gliograd/error.hpp"

namespace gg {

namespace {

// All on-disk integers and floats are little-endian; this codebase targets
// little-endian hosts and the readers reject byte-swapped headers.

template <typename T>
void write_le(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& where) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail(ErrorCode::Data, where + ": truncated file");
    return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::Io, "cannot open for reading: " + path.string());
    return is;
}

} // namespace

// ---- NIfTI-1 ---------------------------------------------------------------

Volume read_nifti(const std::filesystem::path& path) {
    std::ifstream is = open_in(path);
    const std::string where = "nifti " + path.string();

    char header[348];
    is.read(header, sizeof(header));
    if (!is) fail(ErrorCode::Data, where + ": truncated header");

    int32_t sizeof_hdr;
    std::memcpy(&sizeof_hdr, header, 4);
    if (sizeof_hdr != 348) {
        // 348 byte-swapped = 0x5C010000
        if (sizeof_hdr == 0x5C010000)
            fail(ErrorCode::Data, where + ": big-endian header (sizeof_hdr) not supported");
        fail(ErrorCode::Data, where + ": bad sizeof_hdr " + std::to_string(sizeof_hdr));
    }
    if (std::memcmp(header + 344, "n+1\0", 4) != 0)
        fail(ErrorCode::Data, where + ": bad magic, expected n+1");

    int16_t dim[8];
    std::memcpy(dim, header + 40, sizeof(dim));
    if (dim[0] != 3)
        fail(ErrorCode::Data, where + ": dim[0] must be 3, got " + std::to_string(dim[0]));
    for (int i = 1; i <= 3; ++i)
        if (dim[i] <= 0)
            fail(ErrorCode::Data, where + ": dim[" + std::to_string(i) + "] must be positive");

    int16_t datatype, bitpix;
    std::memcpy(&datatype, header + 70, 2);
    std::memcpy(&bitpix, header + 72, 2);

    float pixdim[8];
    std::memcpy(pixdim, header + 76, sizeof(pixdim));
    float vox_offset, scl_slope, scl_inter;
    std::memcpy(&vox_offset, header + 108, 4);
    std::memcpy(&scl_slope, header + 112, 4);
    std::memcpy(&scl_inter, header + 116, 4);

    // dim order in the file is x,y,z (fastest first); Volume dims are {d,h,w}.
    Volume v = Volume::zeros({dim[3], dim[2], dim[1]},
                             {pixdim[3] > 0 ? pixdim[3] : 1.f,
                              pixdim[2] > 0 ? pixdim[2] : 1.f,
                              pixdim[1] > 0 ? pixdim[1] : 1.f});

    if (vox_offset < 348)
        fail(ErrorCode::Data, where + ": vox_offset " + std::to_string(vox_offset) + " overlaps header");
    is.seekg(static_cast<std::streamoff>(vox_offset));

    const int64_t n = v.numel();
    auto scaled = [&](float raw) {
        return scl_slope != 0.f ? raw * scl_slope + scl_inter : raw;
    };
    switch (datatype) {
        case 2: { // uint8
            std::vector<uint8_t> buf(static_cast<size_t>(n));
            is.read(reinterpret_cast<char*>(buf.data()), n);
            if (!is) fail(ErrorCode::Data, where + ": truncated payload");
            for (int64_t i = 0; i < n; ++i) v.values[i] = scaled(buf[i]);
            break;
        }
        case 4: { // int16
            std::vector<int16_t> buf(static_cast<size_t>(n));
            is.read(reinterpret_cast<char*>(buf.data()), n * 2);
            if (!is) fail(ErrorCode::Data, where + ": truncated payload");
            for (int64_t i = 0; i < n; ++i) v.values[i] = scaled(buf[i]);
            break;
        }
        case 16: { // float32
            is.read(reinterpret_cast<char*>(v.values.data()), n * 4);
            if (!is) fail(ErrorCode::Data, where + ": truncated payload");
            if (scl_slope != 0.f)
                for (auto& x : v.values) x = x * scl_slope + scl_inter;
            break;
        }
        default:
            fail(ErrorCode::Data, where + ": unsupported datatype " + std::to_string(datatype));
    }
    return v;
}

// ---- native GGV1 -----------------------------------------------------------

namespace {
constexpr char kVolumeMagic[4] = {'G', 'G', 'V', '1'};
constexpr char kCheckpointMagic[4] = {'G', 'G', 'C', '1'};
} // namespace

void write_ggv(const std::filesystem::path& path, const Volume& v) {
    std::ofstream os = open_out(path);
    os.write(kVolumeMagic, 4);
    for (int d : v.dims) write_le<uint32_t>(os, static_cast<uint32_t>(d));
    for (float s : v.spacing) write_le<float>(os, s);
    os.write(reinterpret_cast<const char*>(v.values.data()),
             static_cast<std::streamsize>(v.values.size() * 4));
    if (!os) fail(ErrorCode::Io, "write failed: " + path.string());
}

Volume read_ggv(const std::filesystem::path& path) {
    std::ifstream is = open_in(path);
    const std::string where = "ggv " + path.string();
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kVolumeMagic, 4) != 0)
        fail(ErrorCode::Data, where + ": bad magic/version, expected GGV1");
    std::array<int, 3> dims{};
    for (auto& d : dims) d = static_cast<int>(read_le<uint32_t>(is, where));
    std::array<float, 3> spacing{};
    for (auto& s : spacing) s = read_le<float>(is, where);
    Volume v = Volume::zeros(dims, spacing);
    is.read(reinterpret_cast<char*>(v.values.data()),
            static_cast<std::streamsize>(v.values.size() * 4));
    if (!is) fail(ErrorCode::Data, where + ": truncated payload");
    return v;
}

Volume read_volume(const std::filesystem::path& path) {
    if (path.extension() == ".nii") return read_nifti(path);
    return read_ggv(path);
}

// ---- checkpoints GGC1 --------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
    std::ofstream os = open_out(path);
    os.write(kCheckpointMagic, 4);
    write_le<uint32_t>(os, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params.items) {
        write_le<uint16_t>(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<uint8_t>(os, static_cast<uint8_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) write_le<uint32_t>(os, static_cast<uint32_t>(t.dim(i)));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * 4));
    }
    if (!os) fail(ErrorCode::Io, "write failed: " + path.string());
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint_tensors(
    const std::filesystem::path& path) {
    std::ifstream is = open_in(path);
    const std::string where = "checkpoint " + path.string();
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        fail(ErrorCode::Data, where + ": bad magic/version, expected GGC1");
    const uint32_t count = read_le<uint32_t>(is, where);
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t nameLen = read_le<uint16_t>(is, where);
        std::string name(nameLen, '\0');
        is.read(name.data(), nameLen);
        if (!is) fail(ErrorCode::Data, where + ": truncated name");
        const uint8_t rank = read_le<uint8_t>(is, where);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_le<uint32_t>(is, where));
        Tensor t = Tensor::zeros(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * 4));
        if (!is) fail(ErrorCode::Data, where + ": truncated payload for " + name);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

void load_checkpoint(const std::filesystem::path& path, ParamSet& params) {
    auto tensors = read_checkpoint_tensors(path);
    if (tensors.size() != params.size())
        fail(ErrorCode::Data, "checkpoint " + path.string() + ": has " +
                                  std::to_string(tensors.size()) + " tensors, model expects " +
                                  std::to_string(params.size()));
    for (size_t i = 0; i < tensors.size(); ++i) {
        auto& [name, src] = tensors[i];
        auto& [want, dst] = params.items[i];
        if (name != want)
            fail(ErrorCode::Data, "checkpoint " + path.string() + ": tensor " + name +
                                      " does not match model parameter " + want);
        if (!same_shape(src.shape(), dst.shape()))
            fail(ErrorCode::Data, "checkpoint " + path.string() + ": shape " +
                                      shape_str(src.shape()) + " for " + name +
                                      " does not match model shape " + shape_str(dst.shape()));
        dst.values() = src.values();
    }
}

// ---- manifest ----------------------------------------------------------------

namespace {
constexpr const char* kHeader = "case_id,t1,t1ce,t2,flair,seg,grade";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}
} // namespace

std::vector<CaseRecord> load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorCode::Io, "cannot open manifest: " + path.string());
    std::string line;
    if (!std::getline(is, line)) fail(ErrorCode::Data, "manifest " + path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
        fail(ErrorCode::Data, "manifest " + path.string() + ": header must be exactly `" +
                                  std::string(kHeader) + "`");
    std::vector<CaseRecord> out;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 7)
            fail(ErrorCode::Data, "manifest " + path.string() + ":" + std::to_string(lineno) +
                                      ": expected 7 cells, got " + std::to_string(cells.size()));
        CaseRecord r;
        r.case_id = cells[0];
        for (int m = 0; m < kNumModalities; ++m) r.modality_paths[m] = cells[1 + m];
        r.seg_path = cells[5];
        if (cells[6].empty()) {
            r.grade = std::nullopt;
        } else if (cells[6] == "GBM") {
            r.grade = Grade::GBM;
        } else if (cells[6] == "LGG") {
            r.grade = Grade::LGG;
        } else {
            fail(ErrorCode::Data, "manifest case " + r.case_id + ": grade must be GBM or LGG, got `" +
                                      cells[6] + "`");
        }
        if (r.modality_paths[static_cast<int>(Modality::T1ce)].empty())
            fail(ErrorCode::Data, "manifest case " + r.case_id + ": T1ce path is required");
        if (r.modality_paths[static_cast<int>(Modality::T2)].empty() &&
            r.modality_paths[static_cast<int>(Modality::Flair)].empty())
            fail(ErrorCode::Data, "manifest case " + r.case_id + ": need at least one of T2/FLAIR");
        out.push_back(std::move(r));
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<CaseRecord>& records) {
    std::ofstream os(path);
    if (!os) fail(ErrorCode::Io, "cannot open manifest for writing: " + path.string());
    os << kHeader << "\n";
    for (const auto& r : records) {
        os << r.case_id;
        for (const auto& p : r.modality_paths) os << "," << p;
        os << "," << r.seg_path << ",";
        if (r.grade) os << grade_name(*r.grade);
        os << "\n";
    }
    if (!os) fail(ErrorCode::Io, "write failed: " + path.string());
}

MultiModalCase load_case(const CaseRecord& rec, const std::filesystem::path& rel_base) {
    MultiModalCase c;
    c.case_id = rec.case_id;
    for (int m = 0; m < kNumModalities; ++m) {
        if (!rec.modality_paths[m].empty())
            c.modalities[m] = read_volume(rel_base / rec.modality_paths[m]);
    }
    if (!rec.seg_path.empty()) c.segmentation = read_volume(rel_base / rec.seg_path);
    c.grade = rec.grade;
    c.validate();
    return c;
}

CaseRecord write_case_ggv(const std::filesystem::path& dir, const MultiModalCase& c) {
    std::filesystem::create_directories(dir);
    CaseRecord r;
    r.case_id = c.case_id;
    for (int m = 0; m < kNumModalities; ++m) {
        if (!c.modalities[m]) continue;
        const std::string fname = c.case_id + "_" + kModalityNames[m] + ".ggv";
        write_ggv(dir / fname, *c.modalities[m]);
        r.modality_paths[m] = fname;
    }
    if (c.segmentation) {
        const std::string fname = c.case_id + "_seg.ggv";
        write_ggv(dir / fname, *c.segmentation);
        r.seg_path = fname;
    }
    r.grade = c.grade;
    return r;
}

} // namespace gg
