#pragma once

#include "uvweave/pipeline.hpp"

#include <map>
#include <string>
#include <vector>

namespace uvweave {

// A sequence on disk: <dir>/manifest.json plus the files it names, all paths
// relative to <dir>.
struct UVFiles {
    std::string uv;          // 3-channel PFM: u, v, part
    std::string silhouette;  // 1-channel PFM
};

struct FrameFiles {
    std::string image;  // .pfm or .ppm
    std::string mask;
    // keyed by producer: gt, frame, raw, extend, optimize, relocate
    std::map<std::string, UVFiles> uv;
    std::string correspondence;  // ground truth, 3-channel PFM (x, y, 0)
    std::string render;
};

struct StageRecord {
    std::string name;
    std::string config;   // JSON text, every effective setting
    std::string summary;  // JSON text, deterministic results only
};

struct Manifest {
    int version = 1;
    int width = 0;
    int height = 0;
    int tex_width = 0;
    int tex_height = 0;
    bool parts = false;
    std::vector<FrameFiles> frames;
    std::map<std::string, std::string> textures;  // gt, const
    std::string metrics;
    std::vector<StageRecord> stages;

    const StageRecord* stage(const std::string& name) const;
    std::string to_json() const;
};

std::string manifest_file(const std::string& dir);
Manifest parse_manifest(const std::string& json_text);
// Parses and checks that every referenced file exists under `dir`.
Manifest load_manifest(const std::string& dir);
void save_manifest(const std::string& dir, const Manifest& m);

// Reads .ppm as 8-bit and anything else as PFM.
Field2 read_image(const std::string& path);

struct StageOptions {
    int threads = 0;        // 0: UVWEAVE_THREADS, else hardware
    std::string config;     // JSON text with one section per stage; empty: defaults
    std::string flow_dir;   // relocate: NNNN.flo for frames >= 1, pixel units on the texture grid
    std::string texture;    // retexture: replacement texture
    std::string out_dir;    // retexture: output directory, default <dir>/retexture
    bool log = false;       // stage timings on stderr
};

// gen, corrupt, extend, optimize, relocate, synth, metrics, retexture.
// Reads inputs named by the manifest in `dir`, writes outputs and the updated
// manifest, returns the stage summary as JSON. Running a stage drops the
// records of every stage downstream of it.
std::string run_stage(const std::string& stage, const std::string& dir, const StageOptions& opt);

// extend -> optimize -> relocate -> synth -> metrics; returns the metrics JSON.
std::string run_pipeline(const std::string& dir, const StageOptions& opt);

// Finite-difference check of the analytic gradient on small seeded scenes.
struct GradCheckSummary {
    double max_rel_error = 0.0;
    double tolerance = 1e-3;
    int scenes = 0;
    int probes = 0;
    std::string to_json() const;
};
GradCheckSummary run_grad_check(const std::string& config_json);

// Images, masks, raw UVs and whatever later stages left in the manifest.
Sequence load_sequence(const std::string& dir, const Manifest& m);

}  // namespace uvweave
