#include "deshadow/checkpoint.hpp"

#include "deshadow/errors.hpp"

namespace deshadow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "deshadow-checkpoint";

torch::serialize::InputArchive open_archive(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw FormatError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue format;
  if (!archive.try_read("format", format) || !format.isString() ||
      format.toStringRef() != kFormat) {
    throw FormatError("not a deshadow checkpoint: " + path.string());
  }
  return archive;
}

std::string read_string(torch::serialize::InputArchive& archive, const char* key) {
  c10::IValue v;
  if (!archive.try_read(key, v) || !v.isString()) {
    throw FormatError(std::string("checkpoint missing ") + key);
  }
  return v.toStringRef();
}

std::int64_t read_int(torch::serialize::InputArchive& archive, const char* key) {
  c10::IValue v;
  if (!archive.try_read(key, v) || !v.isInt()) {
    throw FormatError(std::string("checkpoint missing ") + key);
  }
  return v.toInt();
}

}  // namespace

void save_checkpoint(const fs::path& path, ModelBundle& models, const OptimizerSet* optimizers,
                     const CheckpointInfo& info) {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string(kFormat)));
  archive.write("version", c10::IValue(kCheckpointVersion));
  archive.write("config", c10::IValue(json{{"model", models.config},
                                           {"train", info.train_config}}
                                          .dump()));
  archive.write("patch_size", c10::IValue(static_cast<std::int64_t>(models.config.patch_size)));
  archive.write("step", c10::IValue(info.step));
  archive.write("epoch", c10::IValue(info.epoch));

  auto write_module = [&](const char* key, const torch::nn::Module& m) {
    torch::serialize::OutputArchive sub;
    m.save(sub);
    archive.write(key, sub);
  };
  write_module("param_net", *models.param_net);
  write_module("matte_net", *models.matte_net);
  write_module("d_net", *models.d_net);

  if (optimizers && optimizers->param && optimizers->matte && optimizers->critic) {
    auto write_opt = [&](const char* key, const torch::optim::Optimizer& o) {
      torch::serialize::OutputArchive sub;
      o.save(sub);
      archive.write(key, sub);
    };
    write_opt("opt_param", *optimizers->param);
    write_opt("opt_matte", *optimizers->matte);
    write_opt("opt_critic", *optimizers->critic);
  }

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = fs::path(path.string() + ".tmp");
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  fs::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  auto archive = open_archive(path);
  CheckpointInfo info;
  info.version = read_int(archive, "version");
  if (info.version > kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(info.version) + " is newer than " +
                      std::to_string(kCheckpointVersion));
  }
  try {
    const json cfg = json::parse(read_string(archive, "config"));
    info.model_config = cfg.at("model");
    info.train_config = cfg.value("train", json(nullptr));
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint config: " + std::string(e.what()));
  }
  info.step = read_int(archive, "step");
  info.epoch = read_int(archive, "epoch");
  return info;
}

ModelBundle load_models(const fs::path& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  ModelBundle models(info.model_config.get<ModelConfig>());
  auto archive = open_archive(path);
  auto read_module = [&](const char* key, torch::nn::Module& m) {
    torch::serialize::InputArchive sub;
    if (!archive.try_read(key, sub)) throw FormatError(std::string("checkpoint missing ") + key);
    m.load(sub);
  };
  read_module("param_net", *models.param_net);
  read_module("matte_net", *models.matte_net);
  read_module("d_net", *models.d_net);
  models.eval();
  return models;
}

bool load_optimizers(const fs::path& path, OptimizerSet& optimizers) {
  auto archive = open_archive(path);
  torch::serialize::InputArchive p, m, c;
  if (!archive.try_read("opt_param", p) || !archive.try_read("opt_matte", m) ||
      !archive.try_read("opt_critic", c)) {
    return false;
  }
  optimizers.param->load(p);
  optimizers.matte->load(m);
  optimizers.critic->load(c);
  return true;
}

}  // namespace deshadow
