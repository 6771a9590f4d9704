// SPDX-License-Identifier: Apache-2.0

#include "probsr/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "probsr/errors.hpp"
#include "probsr/field_io.hpp"
#include "probsr/rng.hpp"

namespace probsr
{

using nlohmann::json;

std::string to_string(Split split)
{
  return split == Split::kTrain ? "train" : "test";
}

Split parse_split(const std::string &text)
{
  if (text == "train")
  {
    return Split::kTrain;
  }
  if (text == "test")
  {
    return Split::kTest;
  }
  throw FormatError("unknown split tag \"" + text + "\"");
}

int test_count(int n)
{
  return (n + 2) / 5;
}

std::string Manifest::to_jsonl() const
{
  std::string out;
  json header = {{"seed", seed}, {"l", l}, {"n", n}, {"version", 1}, {"config", config}};
  out += header.dump() + "\n";
  for (const auto &e : entries)
  {
    json rec = {{"id", e.id},
                {"a", e.params.a},
                {"b", e.params.b},
                {"c", e.params.c},
                {"d", e.params.d},
                {"lr_path", e.lr_path},
                {"hr_path", e.hr_path ? json(*e.hr_path) : json(nullptr)},
                {"split", to_string(e.split)},
                {"crc32_lr", e.crc32_lr},
                {"crc32_hr", e.crc32_hr ? json(*e.crc32_hr) : json(nullptr)}};
    out += rec.dump() + "\n";
  }
  return out;
}

Manifest Manifest::from_jsonl(const std::string &text, const std::string &origin)
{
  std::istringstream in(text);
  std::string line;
  Manifest m;
  bool have_header = false;
  try
  {
    while (std::getline(in, line))
    {
      if (line.empty())
      {
        continue;
      }
      const json rec = json::parse(line);
      if (!have_header)
      {
        if (rec.at("version").get<int>() != 1)
        {
          throw FormatError(origin + ": unsupported manifest version");
        }
        m.seed = rec.at("seed").get<std::uint64_t>();
        m.l = rec.at("l").get<int>();
        m.n = rec.at("n").get<int>();
        if (rec.contains("config"))
        {
          m.config = rec.at("config");
        }
        have_header = true;
        continue;
      }
      ManifestEntry e;
      e.id = rec.at("id").get<int>();
      e.params = {rec.at("a").get<double>(), rec.at("b").get<double>(), rec.at("c").get<double>(),
                  rec.at("d").get<double>()};
      e.lr_path = rec.at("lr_path").get<std::string>();
      if (!rec.at("hr_path").is_null())
      {
        e.hr_path = rec.at("hr_path").get<std::string>();
      }
      e.split = parse_split(rec.at("split").get<std::string>());
      e.crc32_lr = rec.at("crc32_lr").get<std::uint32_t>();
      if (!rec.at("crc32_hr").is_null())
      {
        e.crc32_hr = rec.at("crc32_hr").get<std::uint32_t>();
      }
      m.entries.push_back(std::move(e));
    }
  }
  catch (const json::exception &ex)
  {
    throw FormatError(origin + ": malformed manifest: " + ex.what());
  }
  if (!have_header)
  {
    throw FormatError(origin + ": empty manifest");
  }
  if (static_cast<int>(m.entries.size()) != m.n)
  {
    throw FormatError(origin + ": header declares " + std::to_string(m.n) + " samples, found " +
                      std::to_string(m.entries.size()));
  }
  return m;
}

namespace
{

std::string field_name(int id, const char *kind)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "fields/%06d_%s.psrf", id, kind);
  return buf;
}

}  // namespace

Manifest generate(int n, int l, std::uint64_t seed, HrPolicy hr_policy, const std::filesystem::path &out_dir,
                  const json &config)
{
  if (n < 1)
  {
    throw ConfigError("dataset size must be at least 1");
  }
  if (l < 8)
  {
    throw ConfigError("LR resolution must be at least 8 nodes per side");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "fields", ec);
  if (ec)
  {
    throw IoError("cannot create " + (out_dir / "fields").string() + ": " + ec.message());
  }

  Manifest m;
  m.seed = seed;
  m.l = l;
  m.n = n;
  m.config = config;
  m.entries.resize(static_cast<std::size_t>(n));

  // Seeded shuffle: the first n_test ids of the permutation form the test split.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(seed, {0x5B117}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  const int ntest = test_count(n);
  for (int k = 0; k < n; ++k)
  {
    m.entries[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].split =
        k < ntest ? Split::kTest : Split::kTrain;
  }

  const Grid lr_grid(l);
  const Grid hr_grid(4 * l);
  const SparseMatrix A_lr = assemble_stiffness(lr_grid);
  std::optional<SparseMatrix> A_hr;
  if (hr_policy != HrPolicy::kNone)
  {
    A_hr = assemble_stiffness(hr_grid);
  }

  std::vector<std::string> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int id = 0; id < n; ++id)
  {
    auto &e = m.entries[static_cast<std::size_t>(id)];
    try
    {
      e.id = id;
      e.params = sample_forcing(derive_seed(seed, {static_cast<std::uint64_t>(id)}));
      const Field lr = solve(A_lr, assemble_load(lr_grid, e.params), 1e-10);
      const auto lr_bytes = encode_field(lr);
      e.lr_path = field_name(id, "lr");
      write_file_bytes(out_dir / e.lr_path, lr_bytes);
      e.crc32_lr = crc32(lr_bytes);

      const bool want_hr = hr_policy == HrPolicy::kAll || (hr_policy == HrPolicy::kTestOnly && e.split == Split::kTest);
      if (want_hr)
      {
        const Field hr = solve(*A_hr, assemble_load(hr_grid, e.params), 1e-10);
        const auto hr_bytes = encode_field(hr);
        e.hr_path = field_name(id, "hr");
        write_file_bytes(out_dir / *e.hr_path, hr_bytes);
        e.crc32_hr = crc32(hr_bytes);
      }
    }
    catch (const std::exception &ex)
    {
      errors[static_cast<std::size_t>(id)] = ex.what();
    }
  }
  for (int id = 0; id < n; ++id)
  {
    if (!errors[static_cast<std::size_t>(id)].empty())
    {
      throw Error("sample " + std::to_string(id) + ": " + errors[static_cast<std::size_t>(id)]);
    }
  }

  const std::string text = m.to_jsonl();
  write_file_bytes(out_dir / "manifest.jsonl",
                   std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
  return m;
}

Manifest generate(int n, int l, std::uint64_t seed, bool with_hr, const std::filesystem::path &out_dir)
{
  return generate(n, l, seed, with_hr ? HrPolicy::kTestOnly : HrPolicy::kNone, out_dir);
}

namespace
{

void verify_file(const std::filesystem::path &path, std::uint32_t expected_crc, const Grid &grid, int id,
                 const char *kind)
{
  const auto bytes = read_file_bytes(path);
  if (crc32(bytes) != expected_crc)
  {
    throw ChecksumError("sample " + std::to_string(id) + ": checksum mismatch in " + kind + " field " +
                        path.string());
  }
  const Field f = decode_field(bytes, path.string());
  if (!(f.grid == grid))
  {
    throw ShapeError("sample " + std::to_string(id) + ": " + kind + " field has " + std::to_string(f.grid.n) +
                     " nodes per side, expected " + std::to_string(grid.n));
  }
}

}  // namespace

Dataset Dataset::load(const std::filesystem::path &manifest_path)
{
  const auto bytes = read_file_bytes(manifest_path);
  Dataset ds;
  ds.manifest_ = Manifest::from_jsonl(std::string(bytes.begin(), bytes.end()), manifest_path.string());
  ds.root_ = manifest_path.parent_path();
  for (const auto &e : ds.manifest_.entries)
  {
    verify_file(ds.root_ / e.lr_path, e.crc32_lr, ds.lr_grid(), e.id, "LR");
    if (e.hr_path)
    {
      if (!e.crc32_hr)
      {
        throw FormatError("sample " + std::to_string(e.id) + ": HR path without checksum");
      }
      verify_file(ds.root_ / *e.hr_path, *e.crc32_hr, ds.hr_grid(), e.id, "HR");
    }
  }
  return ds;
}

std::vector<std::size_t> Dataset::indices(Split split) const
{
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < manifest_.entries.size(); ++k)
  {
    if (manifest_.entries[k].split == split)
    {
      out.push_back(k);
    }
  }
  return out;
}

Field Dataset::lr(std::size_t index) const
{
  return read_field(root_ / entry(index).lr_path);
}

Field Dataset::hr(std::size_t index) const
{
  const auto &e = entry(index);
  if (!e.hr_path)
  {
    throw ConfigError("sample " + std::to_string(e.id) + " has no HR ground truth");
  }
  return read_field(root_ / *e.hr_path);
}

}  // namespace probsr
