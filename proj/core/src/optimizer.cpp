#include "graphbert/optimizer.hpp"

#include <json.hpp>

#include <fstream>

namespace graphbert {

using nlohmann::json;

void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
  json h;
  h["format_version"] = 1;
  h["optimizer_step"] = ckpt.optimizer_step;
  h["has_moments"] = ckpt.has_moments;
  json params = json::array();
  std::size_t offset = 0;
  for (const auto& [name, shape] : ckpt.entries) {
    params.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    offset += numel(shape);
  }
  h["params"] = std::move(params);
  std::string header = h.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot write checkpoint: " + path);
  std::uint32_t len = std::uint32_t(header.size());
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(header.data(), std::streamsize(header.size()));
  os.write(reinterpret_cast<const char*>(ckpt.payload.data()),
           std::streamsize(ckpt.payload.size() * sizeof(float)));
}

Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw ParseError("cannot open checkpoint: " + path);
  std::size_t total = std::size_t(is.tellg());
  is.seekg(0);
  std::uint32_t len = 0;
  if (total < 4) throw ParseError("checkpoint truncated: " + path);
  is.read(reinterpret_cast<char*>(&len), 4);
  if (total < 4 + std::size_t(len)) throw ParseError("checkpoint truncated: " + path);
  std::string header(len, '\0');
  is.read(header.data(), len);
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw ParseError("bad checkpoint header in " + path + ": " + e.what());
  }
  if (h.value("format_version", -1) != 1)
    throw ParseError("unsupported checkpoint format in " + path);
  Checkpoint c;
  c.optimizer_step = h.at("optimizer_step").get<std::size_t>();
  c.has_moments = h.at("has_moments").get<bool>();
  std::size_t count = 0;
  for (const auto& p : h.at("params")) {
    Shape s = p.at("shape").get<Shape>();
    if (p.at("offset").get<std::size_t>() != count)
      throw ParseError("inconsistent checkpoint offsets in " + path);
    count += numel(s);
    c.entries.emplace_back(p.at("name").get<std::string>(), std::move(s));
  }
  std::size_t expect = count * (c.has_moments ? 3 : 1);
  std::size_t bytes = total - 4 - len;
  if (bytes != expect * sizeof(float))
    throw ParseError("checkpoint payload size mismatch in " + path + ": expected " +
                     std::to_string(expect * sizeof(float)) + " bytes, found " +
                     std::to_string(bytes));
  c.payload.resize(expect);
  is.read(reinterpret_cast<char*>(c.payload.data()), std::streamsize(bytes));
  return c;
}

}  // namespace graphbert
