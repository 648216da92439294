#include <malloc.h>

#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "commands.hpp"
#include "deforma/checkpoint.hpp"
#include "deforma/facemodel.hpp"

using namespace deforma::cli;

namespace {

void add_view_flags(CLI::App* cmd, ViewFlags& v) {
  cmd->add_option("--ckpt", v.ckpt, "FP01 checkpoint")->required();
  cmd->add_option("--size", v.size, "image size WxH")->capture_default_str();
  cmd->add_option("--z-id-seed", v.z_id_seed, "draw z_id ~ N(0, sigma) from this seed (default: zeros)");
  cmd->add_option("--z-id-sigma", v.z_id_sigma, "scale of the drawn z_id")->capture_default_str();
  cmd->add_option("--samples", v.samples, "samples per ray")->capture_default_str();
  cmd->add_option("--fov", v.fov, "vertical field of view (radians)")->capture_default_str();
  cmd->add_flag("--depth", v.depth, "also write the depth plane");
  cmd->add_option("--threads", v.threads, "render threads (1 = bitwise reproducible)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees large tape buffers every step; keep them
  // in the heap instead of returning them to the kernel each time.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);

  const int cores = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  CLI::App app{"Radiance-manifold rendering, deformation fitting and checks"};
  app.require_subcommand(1);

  RenderFlags render;
  render.view.threads = cores;
  auto* c_render = app.add_subcommand("render", "render one view of a checkpoint");
  add_view_flags(c_render, render.view);
  c_render->add_option("--pose", render.view.pose, "pitch yaw radius")->expected(3)->capture_default_str();
  c_render->add_option("--z-exp", render.view.z_exp, "expression code: a,b,c or a file of numbers");
  c_render->add_option("--out", render.out, "output prefix (<out>.ppm, <out>.depth)")->required();

  AnimateFlags animate;
  animate.view.threads = cores;
  auto* c_anim = app.add_subcommand("animate", "render a pose/expression track");
  add_view_flags(c_anim, animate.view);
  c_anim->add_option("--track", animate.track, "rows of: pitch yaw radius gamma_1 .. gamma_k")->required();
  c_anim->add_option("--out", animate.out, "output directory")->required();

  GradcheckFlags grad;
  auto* c_grad = app.add_subcommand("gradcheck", "reverse-mode gradients against central differences");
  c_grad->add_option("--seed", grad.seed, "parameter seed (default 3)");
  c_grad->add_option("--params", grad.params, "coordinates per case")->capture_default_str();
  c_grad->add_option("--step", grad.step, "finite-difference step")->capture_default_str();
  c_grad->add_option("--tolerance", grad.tolerance, "relative error bound")->capture_default_str();

  FitFlags fit;
  fit.threads = cores;
  auto* c_fit = app.add_subcommand("fit", "fit the fields to the synthetic scene");
  c_fit->add_option("--config", fit.config, "key = value file");
  c_fit->add_option("--set", fit.set, "key=value override (repeatable)");
  c_fit->add_option("--steps", fit.steps, "training steps");
  c_fit->add_option("--out", fit.out, "output directory")->required();
  c_fit->add_option("--threads", fit.threads, "render threads")->capture_default_str();

  BasisFlags basis;
  auto* c_basis = app.add_subcommand("make-basis", "write a synthetic face basis");
  c_basis->add_option("--seed", basis.seed, "basis seed (default 0)");
  c_basis->add_option("--vertices", basis.vertices)->capture_default_str();
  c_basis->add_option("--id-dims", basis.id_dims)->capture_default_str();
  c_basis->add_option("--exp-dims", basis.exp_dims)->capture_default_str();
  c_basis->add_option("--landmarks", basis.landmarks)->capture_default_str();
  c_basis->add_option("--out", basis.out, "FB01 file")->required();

  InitFlags init;
  auto* c_init = app.add_subcommand("init", "write a freshly initialized checkpoint");
  c_init->add_option("--seed", init.seed, "init seed (default 1)");
  c_init->add_flag("--zero-output", init.zero_output, "zero the radiance output layers (grey image)");
  c_init->add_option("--manifold", init.manifold, "learned or analytic")->capture_default_str();
  c_init->add_option("--out", init.out, "FP01 file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_render->parsed()) return run_render(render);
    if (c_anim->parsed()) return run_animate(animate);
    if (c_grad->parsed()) return run_gradcheck(grad);
    if (c_fit->parsed()) return run_fit(fit);
    if (c_basis->parsed()) return run_make_basis(basis);
    if (c_init->parsed()) return run_init(init);
  } catch (const deforma::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
