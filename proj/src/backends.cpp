#include "spim/backend.hpp"

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace spim {

// --- FileChannel ---

struct FileChannel::Impl {
    std::ifstream in;
    bool eof = false;
};

FileChannel::FileChannel(const std::filesystem::path& file) : impl_(std::make_shared<Impl>()) {
    impl_->in.open(file);
    if (!impl_->in)
        impl_->eof = true;
}

std::optional<std::string> FileChannel::next_line(std::chrono::milliseconds) {
    if (impl_->eof)
        return std::nullopt;
    std::string line;
    if (!std::getline(impl_->in, line)) {
        impl_->eof = true;
        return std::nullopt;
    }
    return line;
}

bool FileChannel::closed() const { return impl_->eof; }

// --- StreamChannel ---

struct StreamChannel::Impl {
    int fd = -1;
    std::string pending;
    bool eof = false;

    ~Impl() {
        if (fd >= 0)
            ::close(fd);
    }
};

StreamChannel::StreamChannel(const std::filesystem::path& device) : impl_(std::make_shared<Impl>()) {
    impl_->fd = ::open(device.c_str(), O_RDONLY | O_NONBLOCK);
    if (impl_->fd < 0)
        throw std::runtime_error("cannot open channel device '" + device.string() + "'");
}

std::optional<std::string> StreamChannel::next_line(std::chrono::milliseconds wait) {
    auto take_line = [&]() -> std::optional<std::string> {
        auto nl = impl_->pending.find('\n');
        if (nl == std::string::npos)
            return std::nullopt;
        std::string line = impl_->pending.substr(0, nl);
        impl_->pending.erase(0, nl + 1);
        return line;
    };
    if (auto line = take_line())
        return line;
    if (impl_->eof) {
        if (!impl_->pending.empty()) { // trailing unterminated line
            std::string line = std::move(impl_->pending);
            impl_->pending.clear();
            return line;
        }
        return std::nullopt;
    }

    struct pollfd pfd{impl_->fd, POLLIN, 0};
    int r = ::poll(&pfd, 1, static_cast<int>(wait.count()));
    if (r <= 0)
        return std::nullopt;
    char buf[4096];
    ssize_t n = ::read(impl_->fd, buf, sizeof(buf));
    if (n <= 0) {
        impl_->eof = true;
    } else {
        impl_->pending.append(buf, size_t(n));
    }
    return take_line();
}

bool StreamChannel::closed() const { return impl_->eof && impl_->pending.empty(); }

// --- SimBackend ---

std::vector<NamedChannel> SimBackend::start(const Setup& setup) {
    SimResult res = simulate(setup, plat_, params_, setup.repetitions);
    std::string run_id = "r" + std::to_string(setup.id);

    std::map<std::string, std::vector<std::string>> lines;
    for (const auto& g : setup.guests)
        lines[g.name].push_back("[" + g.name + "] guest up, " +
                                (g.victim ? "benchmark " + g.victim->bench_name
                                          : std::string("contention engine running")));

    // Samples arrive ordered by iteration then guest; group per (vm, bench)
    // stream and terminate each stream with END.
    for (const auto& s : res.samples)
        for (const auto& e : sample_to_events(s, run_id))
            lines[s.vm].push_back(emit_line(e));
    for (const auto& g : setup.guests) {
        if (g.kind != GuestKind::victim_benchmark)
            continue;
        MetricEvent end;
        end.run_id = run_id;
        end.vm = g.name;
        end.bench = g.victim->bench_name;
        end.is_end = true;
        lines[g.name].push_back(emit_line(end));
    }

    std::vector<NamedChannel> out;
    for (const auto& g : setup.guests)
        out.push_back(NamedChannel{g.name, std::make_shared<BufferChannel>(lines[g.name])});
    return out;
}

// --- ReplayBackend ---

std::vector<NamedChannel> ReplayBackend::start(const Setup& setup) {
    namespace fs = std::filesystem;
    fs::path dir = dir_ / setup.name;
    if (!fs::exists(dir))
        throw std::runtime_error("no recorded logs for setup '" + setup.name + "' under " +
                                 dir_.string());
    std::vector<NamedChannel> out;
    for (const auto& g : setup.guests)
        out.push_back(NamedChannel{g.name, std::make_shared<FileChannel>(dir / (g.name + ".log"))});
    return out;
}

// --- SerialBackend ---

SerialBackend::SerialBackend(const std::filesystem::path& serialmap_file) {
    std::ifstream in(serialmap_file);
    if (!in)
        throw ConfigError(serialmap_file.string(), "cannot open serial map");
    std::ostringstream buf;
    buf << in.rdbuf();
    nlohmann::json doc = nlohmann::json::parse(buf.str(), nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ConfigError(serialmap_file.string(), "expected a JSON object of vm -> device path");
    for (auto it = doc.begin(); it != doc.end(); ++it)
        map_[it.key()] = it.value().get<std::string>();
}

std::vector<NamedChannel> SerialBackend::start(const Setup& setup) {
    std::vector<NamedChannel> out;
    for (const auto& g : setup.guests) {
        auto it = map_.find(g.name);
        if (it == map_.end())
            throw std::runtime_error("serial map has no channel for VM '" + g.name + "'");
        out.push_back(NamedChannel{g.name, std::make_shared<StreamChannel>(it->second)});
    }
    return out;
}

std::unique_ptr<Backend> make_backend(const std::string& name, const PlatformSpec& plat,
                                      const SimParams& params,
                                      const std::filesystem::path& replay_dir,
                                      const std::filesystem::path& serialmap) {
    if (name == "sim")
        return std::make_unique<SimBackend>(plat, params);
    if (name == "replay")
        return std::make_unique<ReplayBackend>(replay_dir);
    if (name == "serial")
        return std::make_unique<SerialBackend>(serialmap);
    throw ConfigError("backend", "unknown backend '" + name + "'");
}

} // namespace spim
