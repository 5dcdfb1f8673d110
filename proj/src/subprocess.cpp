#include "subprocess.hpp"

#include <array>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <mutex>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "lexcascade/error.hpp"

namespace lexcascade::detail {

namespace {

struct Pipe {
    int read = -1;
    int write = -1;
};

Pipe make_pipe()
{
    std::array<int, 2> fds{};
    if (::pipe2(fds.data(), O_CLOEXEC) != 0) {
        throw Error(ErrorCode::ScorerCrashed, std::string("pipe: ") + std::strerror(errno));
    }
    return {fds[0], fds[1]};
}

void close_fd(int& fd)
{
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

void set_nonblocking(int fd)
{
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
}

}  // namespace

SubprocessResult run_subprocess(const std::string& command, const std::string& input,
                                std::chrono::duration<double> timeout)
{
    // Writing to a child that exited must surface as EPIPE, not kill us.
    static std::once_flag ignore_sigpipe;
    std::call_once(ignore_sigpipe, [] { std::signal(SIGPIPE, SIG_IGN); });

    Pipe in = make_pipe();
    Pipe out = make_pipe();
    Pipe err = make_pipe();

    const pid_t pid = ::fork();
    if (pid < 0) {
        throw Error(ErrorCode::ScorerCrashed, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::dup2(in.read, STDIN_FILENO);
        ::dup2(out.write, STDOUT_FILENO);
        ::dup2(err.write, STDERR_FILENO);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    close_fd(in.read);
    close_fd(out.write);
    close_fd(err.write);
    set_nonblocking(in.write);
    set_nonblocking(out.read);
    set_nonblocking(err.read);

    SubprocessResult result;
    std::size_t written = 0;
    if (input.empty()) {
        close_fd(in.write);
    }
    const auto deadline = std::chrono::steady_clock::now()
        + std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout);
    std::array<char, 65536> buf{};

    while (out.read >= 0 || err.read >= 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            break;
        }
        std::array<pollfd, 3> fds{};
        nfds_t n = 0;
        if (in.write >= 0) {
            fds[n++] = {in.write, POLLOUT, 0};
        }
        if (out.read >= 0) {
            fds[n++] = {out.read, POLLIN, 0};
        }
        if (err.read >= 0) {
            fds[n++] = {err.read, POLLIN, 0};
        }
        const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
        const int ready = ::poll(fds.data(), n, static_cast<int>(std::min<long long>(wait_ms, 1000)));
        if (ready < 0 && errno != EINTR) {
            break;
        }
        for (nfds_t i = 0; i < n; ++i) {
            if (fds[i].revents == 0) {
                continue;
            }
            if (fds[i].fd == in.write) {
                const auto w = ::write(in.write, input.data() + written, input.size() - written);
                if (w > 0) {
                    written += static_cast<std::size_t>(w);
                    if (written == input.size()) {
                        close_fd(in.write);
                    }
                } else if (w < 0 && errno != EAGAIN && errno != EINTR) {
                    result.input_broken = true;
                    close_fd(in.write);
                }
                continue;
            }
            int& fd = fds[i].fd == out.read ? out.read : err.read;
            std::string& sink = fds[i].fd == out.read ? result.out : result.err;
            const auto r = ::read(fd, buf.data(), buf.size());
            if (r > 0) {
                sink.append(buf.data(), static_cast<std::size_t>(r));
            } else if (r == 0 || (errno != EAGAIN && errno != EINTR)) {
                close_fd(fd);
            }
        }
    }
    if (in.write >= 0) {
        result.input_broken = !result.timed_out;
        close_fd(in.write);
    }
    close_fd(out.read);
    close_fd(err.read);

    if (result.timed_out) {
        ::kill(pid, SIGKILL);
    }
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    result.exit_status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

}  // namespace lexcascade::detail
