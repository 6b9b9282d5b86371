#include <map>
#include <string>
#include <vector>

#include "logfid/synth.hpp"

namespace logfid {

namespace {

class Builder {
 public:
  explicit Builder(WorkloadModel& m) : m_(m) {}

  EventId event(const std::string& pattern, const std::string& level = "INFO") {
    auto it = ids_.find(pattern);
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<EventId>(m_.event_patterns.size());
    m_.event_patterns.push_back(pattern);
    m_.event_levels.push_back(level);
    ids_[pattern] = id;
    return id;
  }

  std::vector<EventId> slot(std::initializer_list<const char*> patterns) {
    std::vector<EventId> out;
    for (const char* p : patterns) out.push_back(event(p));
    return out;
  }

  int step(std::string name, double wait_min, double wait_max,
           std::initializer_list<std::initializer_list<const char*>> slots,
           std::initializer_list<const char*> polls) {
    SubprocessTemplate t;
    t.name = std::move(name);
    t.alternative_probability = 0.05;
    t.wait_min = wait_min;
    t.wait_max = wait_max;
    for (const auto& s : slots) t.slots.push_back(slot(s));
    for (const char* p : polls) t.poll_events.push_back(event(p));
    m_.subprocesses.push_back(std::move(t));
    return static_cast<int>(m_.subprocesses.size()) - 1;
  }

 private:
  WorkloadModel& m_;
  std::map<std::string, EventId> ids_;
};

}  // namespace

WorkloadModel WorkloadModel::default_model() {
  WorkloadModel m;
  Builder b(m);

  const int auth = b.step("auth", 240, 320,
      {{"keystone token issued for user {uuid}"},
       {"keystone project scope resolved to {uuid}"},
       {"keystone role assignment verified for {uuid}", "keystone cached roles reused for {uuid}"},
       {"keystone catalog lookup returned {n} endpoints"},
       {"keystone request authenticated from {ip}"},
       {"keystone policy check passed in {n} ms", "keystone policy cache refreshed in {n} ms"}},
      {"keystone token cache sweep removed {n} entries"});

  const int schedule = b.step("schedule", 400, 520,
      {{"nova-api create server request accepted {uuid}"},
       {"nova-api quota reservation committed for {uuid}"},
       {"nova-conductor build request queued {uuid}"},
       {"nova-scheduler filter pass started for {uuid}"},
       {"nova-scheduler host weighing completed over {n} hosts",
        "nova-scheduler weighing fallback used for {n} hosts"},
       {"nova-scheduler selected destination {ip}"},
       {"nova-scheduler claim succeeded on {ip}"},
       {"nova-conductor cell mapping resolved {uuid}", "nova-conductor cached cell used {uuid}"}},
      {"nova-scheduler periodic host refresh saw {n} hosts"});

  const int network = b.step("network", 700, 840,
      {{"neutron-server port create requested {uuid}"},
       {"neutron-server security group bound {uuid}"},
       {"neutron-server subnet allocated address {ip}"},
       {"neutron-dhcp lease offered to {ip}", "neutron-dhcp reservation reused for {ip}"},
       {"neutron-l3 router interface added {uuid}"},
       {"neutron-ovs flow rules installed {n} entries"},
       {"neutron-ovs tunnel endpoint ready at {ip}"},
       {"neutron-metadata proxy registered {uuid}", "neutron-metadata cache primed {uuid}"},
       {"neutron-server port binding completed {uuid}"},
       {"neutron-server floating address associated {ip}"}},
      {"neutron-agent state report sent for {n} ports"});

  const int image = b.step("image", 200, 280,
      {{"glance-api image metadata fetched {uuid}"},
       {"glance-api image download started {uuid}"},
       {"glance-store cache miss for {n} bytes", "glance-store cache hit for {n} bytes"},
       {"glance-api checksum verified for {uuid}"},
       {"nova-compute image converted to raw {uuid}"},
       {"glance-api download finished in {n} ms"}},
      {"glance-api transfer progress at {n} percent"});

  const int spawn = b.step("spawn", 1200, 1400,
      {{"nova-compute instance claim accepted {uuid}"},
       {"nova-compute block device mapping prepared {uuid}"},
       {"libvirt domain xml generated for {uuid}"},
       {"libvirt domain defined {uuid}"},
       {"nova-compute vif plugged {uuid}", "nova-compute vif plug delayed {n} ms"},
       {"libvirt guest started with pid {n}"},
       {"nova-compute power state synced {uuid}"},
       {"nova-compute instance spawned in {n} seconds"},
       {"nova-compute console log attached {uuid}", "nova-compute serial console enabled {uuid}"},
       {"nova-api server status active {uuid}"}},
      {"nova-compute waiting for instance {uuid} to become active"});

  const int volume = b.step("volume", 1000, 1160,
      {{"cinder-api volume create accepted {uuid}"},
       {"cinder-scheduler backend chosen at {ip}"},
       {"cinder-volume lvm extent allocated {n} blocks"},
       {"cinder-volume export target created {uuid}", "cinder-volume target export reused {uuid}"},
       {"nova-compute volume attach started {uuid}"},
       {"os-brick iscsi session established with {ip}"},
       {"nova-compute attachment confirmed for {uuid}"},
       {"cinder-api attachment record updated {uuid}"}},
      {"cinder-volume waiting for volume {uuid} to become available"});

  const int ssh = b.step("ssh", 600, 720,
      {{"tempest ssh client connecting to {ip}"},
       {"tempest ssh handshake completed with {ip}"},
       {"tempest ssh command executed exit {n}", "tempest remote command retried exit {n}"},
       {"tempest ping reply received from {ip}"},
       {"tempest server validation passed {uuid}"}},
      {"tempest waiting for ssh on {ip}"});

  const int workload = b.step("workload", 1800, 2000,
      {{"nova-api server action reboot {uuid}"},
       {"nova-compute reboot completed for {uuid}"},
       {"nova-api resize request accepted {uuid}"},
       {"nova-compute migration context created {uuid}"},
       {"nova-compute disk resized to {n} GB", "nova-compute disk resize skipped at {n} GB"},
       {"nova-compute resize confirmed for {uuid}"},
       {"ceilometer sample published cpu {n}"},
       {"ceilometer meter batch flushed {n}", "ceilometer notification dropped {n}"}},
      {"ceilometer polling cycle finished {n} samples",
       "nova-compute resource usage audit counted {n} instances"});

  const int snapshot = b.step("snapshot", 200, 280,
      {{"nova-api snapshot request accepted {uuid}"},
       {"nova-compute snapshot freeze started {uuid}"},
       {"libvirt live snapshot taken {uuid}"},
       {"glance-api snapshot upload queued {uuid}"},
       {"glance-store object written {n} bytes", "glance-store object deduplicated {n} bytes"},
       {"nova-compute snapshot thaw completed {uuid}"}},
      {"glance-api snapshot upload at {n} percent"});

  const int teardown = b.step("teardown", 400, 520,
      {{"nova-api delete server request {uuid}"},
       {"nova-compute instance terminating {uuid}"},
       {"libvirt domain destroyed {uuid}"},
       {"nova-compute volume detached {uuid}"},
       {"neutron-server port deleted {uuid}"},
       {"cinder-api volume delete accepted {uuid}"},
       {"nova-compute network deallocated {uuid}", "nova-compute network cleanup deferred {uuid}"},
       {"keystone token revoked for {uuid}"},
       {"nova-api server deleted {uuid}"},
       {"tempest cleanup finished in {n} seconds"}},
      {"nova-compute waiting for deletion of {uuid}"});

  m.timing.background_events = {b.event("oslo-service heartbeat sent to {ip}")};
  m.timing.background_probability = 0.9;
  m.timing.poll_interval_mean = 45.0;

  const int n = static_cast<int>(m.subprocesses.size());
  m.initial.assign(static_cast<std::size_t>(n), 0.0);
  m.initial[static_cast<std::size_t>(auth)] = 1.0;
  m.transitions.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
  auto edge = [&](int from, int to, double p) {
    m.transitions[static_cast<std::size_t>(from)][static_cast<std::size_t>(to)] = p;
  };
  edge(auth, schedule, 1.0);
  edge(schedule, network, 1.0);
  edge(network, image, 0.75);
  edge(network, spawn, 0.25);
  edge(image, spawn, 1.0);
  edge(spawn, volume, 1.0);
  edge(volume, ssh, 1.0);
  edge(ssh, workload, 1.0);
  edge(workload, snapshot, 0.5);
  edge(workload, teardown, 0.5);
  edge(snapshot, teardown, 1.0);
  edge(teardown, n, 1.0);

  FailureMode instance;
  instance.type = "instance";
  instance.edit = FailureEdit::TruncateTail;
  instance.target = spawn;
  instance.error_events = {
      b.event("nova-compute spawn failed for {uuid}", "ERROR"),
      b.event("nova-conductor reschedule exhausted for {uuid}", "ERROR"),
      b.event("nova-api instance marked error {uuid}", "ERROR"),
  };

  FailureMode ssh_failure;
  ssh_failure.type = "ssh";
  ssh_failure.edit = FailureEdit::RepeatBlock;
  ssh_failure.target = ssh;
  ssh_failure.repeat_min = 4;
  ssh_failure.repeat_max = 7;
  ssh_failure.error_events = {
      b.event("tempest ssh timeout after {n} seconds", "WARNING"),
      b.event("tempest validation aborted for {uuid}", "ERROR"),
  };

  FailureMode volume_failure;
  volume_failure.type = "volume";
  volume_failure.edit = FailureEdit::Substitute;
  volume_failure.target = volume;
  volume_failure.substitutions = {
      {b.event("os-brick iscsi session established with {ip}"),
       b.event("os-brick iscsi login failed for {ip}", "ERROR")},
      {b.event("nova-compute attachment confirmed for {uuid}"),
       b.event("nova-compute attachment timed out {uuid}", "ERROR")},
      {b.event("cinder-api attachment record updated {uuid}"),
       b.event("cinder-api attachment rolled back {uuid}", "WARNING")},
  };
  volume_failure.error_events = {b.event("cinder-volume volume state error {uuid}", "ERROR")};
  volume_failure.hang_min = 3600;
  volume_failure.hang_max = 5200;
  volume_failure.hang_poll_events = {
      b.event("cinder-volume waiting for volume {uuid} to become available"),
  };

  m.failure_modes = {instance, ssh_failure, volume_failure};
  return m;
}

}  // namespace logfid
