/** Typed client for the model service HTTP API. */

export type FactorSpec = {
  factors: { name: string; cardinality: number }[];
};

export type ModelInfo = {
  model_name: string;
  factor_spec: FactorSpec;
  resolution: number;
  fine_cutoff: number | null;
  fine_factors: number[] | null;
  checkpoint_digest: string;
};

export type GenerateResponse = { image: string; checkpoint_digest: string };
export type EncodeResponse = { code: number[]; checkpoint_digest: string };
export type TraverseResponse = { images: string[]; checkpoint_digest: string };

export type TraverseAnchor = {
  code?: number[];
  z_seed?: number;
  image?: string;
};

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function parseOrThrow<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      /* keep the status text */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => parseOrThrow<T>(r));
  }

  modelInfo(): Promise<ModelInfo> {
    return this.fetchImpl(`${this.baseUrl}/model/info`).then((r) =>
      parseOrThrow<ModelInfo>(r),
    );
  }

  generate(code: number[], zSeed: number): Promise<GenerateResponse> {
    return this.post("/generate", { code, z_seed: zSeed });
  }

  encode(image: string): Promise<EncodeResponse> {
    return this.post("/encode", { image });
  }

  edit(image: string, fineCode: number[]): Promise<GenerateResponse> {
    return this.post("/edit", { image, fine_code: fineCode });
  }

  traverse(anchor: TraverseAnchor, factor: number, steps: number): Promise<TraverseResponse> {
    return this.post("/traverse", { anchor, factor, steps });
  }
}
