/** Typed client for the enhancement service.
 *
 * Every method maps one endpoint; the UI never computes image math itself,
 * so this file is the complete surface between browser and model.
 */

export type Domain = "SYN" | "REAL";

export interface UploadInfo {
  token: string;
  width: number;
  height: number;
  domain: Domain;
}

export interface Latents {
  domain: Domain;
  style: number[];
  clean_style: number[];
}

export interface Health {
  checkpoint_id: string;
  model_config_hash: string;
}

/** Subset of the client the controller depends on; tests substitute fakes. */
export interface Api {
  upload(file: Blob, domain: Domain): Promise<UploadInfo>;
  enhance(token: string, alpha: number, signal?: AbortSignal): Promise<Blob>;
  latents(token: string): Promise<Latents>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Build an ApiError from a non-2xx response, preferring the server's
 * own {"error": ...} text over the bare status line. */
async function toError(res: Response): Promise<ApiError> {
  let message = `${res.status} ${res.statusText}`.trim();
  try {
    const body: unknown = await res.json();
    if (
      typeof body === "object" &&
      body !== null &&
      typeof (body as { error?: unknown }).error === "string"
    ) {
      message = (body as { error: string }).error;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(res.status, message);
}

export class Client implements Api {
  constructor(private readonly base: string = "") {}

  async upload(file: Blob, domain: Domain): Promise<UploadInfo> {
    const res = await fetch(`${this.base}/api/upload?domain=${domain}`, {
      method: "POST",
      body: file,
    });
    if (!res.ok) throw await toError(res);
    return (await res.json()) as UploadInfo;
  }

  async enhance(token: string, alpha: number, signal?: AbortSignal): Promise<Blob> {
    const query = `token=${encodeURIComponent(token)}&alpha=${alpha}`;
    const res = await fetch(`${this.base}/api/enhance?${query}`, { signal });
    if (!res.ok) throw await toError(res);
    return res.blob();
  }

  async latents(token: string): Promise<Latents> {
    const res = await fetch(`${this.base}/api/latents?token=${encodeURIComponent(token)}`);
    if (!res.ok) throw await toError(res);
    return (await res.json()) as Latents;
  }

  async health(): Promise<Health> {
    const res = await fetch(`${this.base}/api/health`);
    if (!res.ok) throw await toError(res);
    return (await res.json()) as Health;
  }
}
