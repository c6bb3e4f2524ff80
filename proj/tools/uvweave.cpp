#include "uvweave/errors.hpp"
#include "uvweave/io.hpp"
#include "uvweave/project.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

int fail(int code, const std::string& msg) {
    std::cerr << "uvweave: " << msg << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uvweave: UV map cleanup, temporal relocation and lookup synthesis"};
    app.require_subcommand(1);

    std::string dir, config_path, flow_dir, texture, out_dir;
    int threads = 0;
    bool quiet = false;

    auto stage_cmd = [&](const std::string& name, const std::string& help) {
        CLI::App* c = app.add_subcommand(name, help);
        c->add_option("dir", dir, "sequence directory holding manifest.json")->required();
        c->add_option("--config", config_path, "JSON file with one section per stage");
        c->add_option("--threads", threads, "worker threads (default: UVWEAVE_THREADS, else all cores)")
            ->check(CLI::PositiveNumber);
        c->add_flag("--quiet", quiet, "no timing lines on stderr");
        return c;
    };

    stage_cmd("gen", "write a synthetic sequence with ground truth");
    stage_cmd("corrupt", "degrade the frame-wise UVs into raw UVs");
    stage_cmd("extend", "cover the full silhouette with mass-spring extrapolation");
    stage_cmd("optimize", "refine UVs against each frame image");
    stage_cmd("relocate", "map every frame onto the frame-0 texture")
        ->add_option("--flow-dir", flow_dir, "directory with NNNN.flo texture flows (frames >= 1)")
        ->check(CLI::ExistingDirectory);
    stage_cmd("synth", "render frames from the constant texture");
    CLI::App* retex = stage_cmd("retexture", "render relocated UVs with another texture");
    retex->add_option("--texture", texture, "replacement texture (.pfm or .ppm)")->required()->check(CLI::ExistingFile);
    retex->add_option("--out", out_dir, "output directory (default: <dir>/retexture)");
    stage_cmd("metrics", "PSNR, T-diff and tOF of the renders against the frames");
    stage_cmd("pipeline", "extend, optimize, relocate, synth and metrics in order");

    CLI::App* grad = app.add_subcommand("grad-check", "finite-difference check of the analytic gradient");
    grad->add_option("--config", config_path, "JSON file with a grad-check section");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // usage problems count as validation errors
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        uvweave::StageOptions opt;
        opt.threads = threads;
        opt.flow_dir = flow_dir;
        opt.texture = texture;
        opt.out_dir = out_dir;
        opt.log = !quiet;
        if (!config_path.empty()) opt.config = uvweave::read_file(config_path);

        CLI::App* cmd = app.get_subcommands().front();
        const std::string name = cmd->get_name();
        if (name == "grad-check") {
            const uvweave::GradCheckSummary r = uvweave::run_grad_check(opt.config);
            std::cout << r.to_json() << "\n";
            if (r.max_rel_error >= r.tolerance)
                return fail(3, "gradient check failed: max relative error " + std::to_string(r.max_rel_error));
            return 0;
        }
        if (name == "pipeline") {
            std::cout << uvweave::run_pipeline(dir, opt) << "\n";
        } else {
            std::cout << uvweave::run_stage(name, dir, opt) << "\n";
        }
        return 0;
    } catch (const uvweave::NumericalError& e) {
        return fail(3, e.what());
    } catch (const uvweave::ValidationError& e) {
        return fail(2, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(2, e.what());
    } catch (const std::exception& e) {
        return fail(1, e.what());
    }
}
