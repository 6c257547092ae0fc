/**
 * Operator dashboard model: polls the server's /stats endpoint and flags
 * staleness when refreshes stop landing (more than three poll intervals
 * without a success). Failed fetches keep the last good values visible.
 */

export const POLL_INTERVAL_MS = 2000;
export const STALE_AFTER_INTERVALS = 3;

export interface StatsPayload {
  connected_users: number;
  perceived_rtf: number;
  queue_depth: number;
  p50_latency_ms: number;
  p90_latency_ms: number;
  uptime_s: number;
}

export interface DashboardModel {
  connectedUsers: number;
  perceivedRtf: number;
  queueDepth: number;
  p90LatencyMs: number;
  lastRefreshMs: number | null;
  stale: boolean;
}

export class DashboardPoller {
  model: DashboardModel = {
    connectedUsers: 0,
    perceivedRtf: 0,
    queueDepth: 0,
    p90LatencyMs: 0,
    lastRefreshMs: null,
    stale: true,
  };

  constructor(
    private readonly fetchStats: () => Promise<StatsPayload>,
    private readonly now: () => number = () => Date.now(),
    private readonly intervalMs: number = POLL_INTERVAL_MS,
  ) {}

  async pollOnce(): Promise<void> {
    try {
      const stats = await this.fetchStats();
      this.model.connectedUsers = stats.connected_users;
      this.model.perceivedRtf = stats.perceived_rtf;
      this.model.queueDepth = stats.queue_depth;
      this.model.p90LatencyMs = stats.p90_latency_ms;
      this.model.lastRefreshMs = this.now();
    } catch {
      // retain last values; staleness will surface the outage
    }
    this.refreshStaleness();
  }

  refreshStaleness(): void {
    const last = this.model.lastRefreshMs;
    this.model.stale = last === null ||
      this.now() - last > STALE_AFTER_INTERVALS * this.intervalMs;
  }
}

export async function fetchStatsHttp(baseUrl: string): Promise<StatsPayload> {
  const response = await fetch(`${baseUrl.replace(/\/$/, '')}/stats`);
  if (!response.ok) throw new Error(`stats fetch failed: ${response.status}`);
  return (await response.json()) as StatsPayload;
}
