// Typed client for the activity service. The UI never does probability math:
// prediction responses keep the probability tokens exactly as serialized by
// the server, so what gets displayed is byte-equal to the payload.
import { z } from "zod";

export const GridFeatureSchema = z.object({
  type: z.literal("Feature"),
  geometry: z.object({
    type: z.literal("Polygon"),
    coordinates: z.array(z.array(z.tuple([z.number(), z.number()]))),
  }),
  properties: z.object({
    id: z.string(),
    poi_total: z.number().int().nonnegative(),
    sparse_flag: z.boolean(),
  }),
});

export const GridSchema = z.object({
  type: z.literal("FeatureCollection"),
  features: z.array(GridFeatureSchema),
});

export const PredictionSchema = z.object({
  context: z.object({
    lat: z.number(),
    lon: z.number(),
    time: z.string(),
    day: z.string(),
    k: z.number().int().min(1),
    level: z.enum(["leaf", "parent"]),
  }),
  cell_id: z.string(),
  radius_m: z.number(),
  activities: z.array(
    z.object({
      id: z.string(),
      label: z.string(),
      probability: z.number().min(0),
    })
  ),
});

export const AccuracySchema = z.object({
  count: z.number().int().nonnegative(),
  accuracy: z.number().min(0).max(1).nullable(),
  k: z.number().int(),
  level: z.string(),
});

export type GridFeature = z.infer<typeof GridFeatureSchema>;
export type Grid = z.infer<typeof GridSchema>;
export type Accuracy = z.infer<typeof AccuracySchema>;

export interface RankedActivity {
  id: string;
  label: string;
  probability: number;
  /** The probability exactly as it appeared in the response body. */
  probabilityText: string;
}

export interface Prediction {
  context: z.infer<typeof PredictionSchema>["context"];
  cellId: string;
  radiusM: number;
  activities: RankedActivity[];
}

export interface FeedbackSubmission {
  context: { location: string; time: string; day: string };
  shown: string[];
  selected: string;
  client_timestamp: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public field: string | null,
    message: string
  ) {
    super(message);
  }
}

/**
 * Pull the raw probability tokens out of a prediction body, in order.
 * JSON.parse would round-trip them through a double; the UI shows these
 * verbatim instead.
 */
export function probabilityTokens(body: string): string[] {
  const tokens: string[] = [];
  const re = /"probability"\s*:\s*(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)/g;
  let m: RegExpExecArray | null;
  while ((m = re.exec(body)) !== null) {
    tokens.push(m[1]!);
  }
  return tokens;
}

export function parsePrediction(body: string): Prediction {
  const parsed = PredictionSchema.parse(JSON.parse(body));
  const tokens = probabilityTokens(body);
  if (tokens.length !== parsed.activities.length) {
    throw new Error("probability token count does not match activity count");
  }
  return {
    context: parsed.context,
    cellId: parsed.cell_id,
    radiusM: parsed.radius_m,
    activities: parsed.activities.map((a, i) => ({
      id: a.id,
      label: a.label,
      probability: a.probability,
      probabilityText: tokens[i]!,
    })),
  };
}

export function bboxParam(minLat: number, minLon: number, maxLat: number, maxLon: number): string {
  return [minLat, minLon, maxLat, maxLon].join(",");
}

type Fetch = typeof fetch;

async function errorFrom(res: Response): Promise<ApiError> {
  let field: string | null = null;
  let message = `HTTP ${res.status}`;
  try {
    const detail = (await res.json()).detail;
    if (detail && typeof detail === "object") {
      field = typeof detail.field === "string" ? detail.field : null;
      if (typeof detail.error === "string") message = detail.error;
    } else if (typeof detail === "string") {
      message = detail;
    }
  } catch {
    // keep the generic message
  }
  return new ApiError(res.status, field, message);
}

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: Fetch = fetch
  ) {}

  private async get(path: string, params: Record<string, string>): Promise<Response> {
    const qs = new URLSearchParams(params).toString();
    const res = await this.fetchImpl(`${this.baseUrl}${path}${qs ? "?" + qs : ""}`);
    if (!res.ok) throw await errorFrom(res);
    return res;
  }

  async grid(bbox?: string): Promise<Grid> {
    const res = await this.get("/grid", bbox ? { bbox } : {});
    return GridSchema.parse(await res.json());
  }

  async predict(
    lat: number,
    lon: number,
    time: string,
    day: string,
    k: number,
    level: "leaf" | "parent"
  ): Promise<Prediction> {
    const res = await this.get("/predict", {
      lat: String(lat),
      lon: String(lon),
      time,
      day,
      k: String(k),
      level,
    });
    return parsePrediction(await res.text());
  }

  async submitFeedback(submission: FeedbackSubmission): Promise<number> {
    const res = await this.fetchImpl(`${this.baseUrl}/feedback`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(submission),
    });
    if (res.status !== 201) throw await errorFrom(res);
    return (await res.json()).id as number;
  }

  async accuracy(k: number, level: "leaf" | "parent"): Promise<Accuracy> {
    const res = await this.get("/accuracy", { k: String(k), level });
    return AccuracySchema.parse(await res.json());
  }
}
