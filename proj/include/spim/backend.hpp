#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "spim/genspace.hpp"
#include "spim/logmon.hpp"
#include "spim/sim.hpp"

namespace spim {

struct BackendCaps {
    bool deterministic = false;
};

/// Executes one setup and exposes one line channel per VM, the way a board
/// exposes one serial port per VM.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::vector<NamedChannel> start(const Setup& setup) = 0;
    virtual void stop() = 0;
    virtual BackendCaps capabilities() const = 0;
    virtual std::string name() const = 0;
};

/// In-memory channel pre-filled with lines (used by the sim backend).
class BufferChannel : public LineChannel {
public:
    explicit BufferChannel(std::vector<std::string> lines) : lines_(std::move(lines)) {}
    std::optional<std::string> next_line(std::chrono::milliseconds) override {
        if (pos_ >= lines_.size())
            return std::nullopt;
        return lines_[pos_++];
    }
    bool closed() const override { return pos_ >= lines_.size(); }

private:
    std::vector<std::string> lines_;
    size_t pos_ = 0;
};

/// Reads a file to EOF line by line (replay logs).
class FileChannel : public LineChannel {
public:
    explicit FileChannel(const std::filesystem::path& file);
    std::optional<std::string> next_line(std::chrono::milliseconds wait) override;
    bool closed() const override;

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

/// Byte stream channel for live sources (serial devices, FIFOs). next_line
/// waits up to the given duration for a complete line.
class StreamChannel : public LineChannel {
public:
    explicit StreamChannel(const std::filesystem::path& device);
    std::optional<std::string> next_line(std::chrono::milliseconds wait) override;
    bool closed() const override;

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

/// Runs the built-in contention simulator and replays its metric lines.
class SimBackend : public Backend {
public:
    SimBackend(PlatformSpec plat, SimParams params)
        : plat_(std::move(plat)), params_(std::move(params)) {}

    std::vector<NamedChannel> start(const Setup& setup) override;
    void stop() override {}
    BackendCaps capabilities() const override { return {true}; }
    std::string name() const override { return "sim"; }

private:
    PlatformSpec plat_;
    SimParams params_;
};

/// Streams previously captured raw logs: <dir>/<setup_name>/<vm>.log.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::vector<NamedChannel> start(const Setup& setup) override;
    void stop() override {}
    BackendCaps capabilities() const override { return {true}; }
    std::string name() const override { return "replay"; }

private:
    std::filesystem::path dir_;
};

/// Binds VM names to device paths via serialmap.json: {"<vm>": "<path>"}.
class SerialBackend : public Backend {
public:
    explicit SerialBackend(const std::filesystem::path& serialmap_file);

    std::vector<NamedChannel> start(const Setup& setup) override;
    void stop() override {}
    BackendCaps capabilities() const override { return {false}; }
    std::string name() const override { return "serial"; }

private:
    std::map<std::string, std::string> map_;
};

std::unique_ptr<Backend> make_backend(const std::string& name, const PlatformSpec& plat,
                                      const SimParams& params,
                                      const std::filesystem::path& replay_dir,
                                      const std::filesystem::path& serialmap);

} // namespace spim
