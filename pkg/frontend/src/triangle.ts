// Placement of a three-option posterior PMF on the 2-simplex.
//
// With ascending options (s1, s2, s3) the plotted point is simply
// (P(s* = s1), P(s* = s2)); the third mass is implied. The simplex center
// (1/3, 1/3) is maximal uncertainty; each vertex is a certain recommendation.

export const CENTER: [number, number] = [1 / 3, 1 / 3];

export interface TrianglePlacement {
  point: [number, number];
  masses: [number, number, number];
  options: [number, number, number];
}

function optionKey(s: number): string {
  // mirror the service's PMF key formatting ("2", "4", "12.857...")
  return String(s);
}

export function placePmf(
  pmf: Record<string, number>,
  options: number[],
): TrianglePlacement {
  if (options.length !== 3) {
    throw new Error(`triangle view needs exactly 3 options, got ${options.length}`);
  }
  const sorted = [...options].sort((a, b) => a - b) as [number, number, number];
  const masses = sorted.map((s) => {
    const mass = pmf[optionKey(s)];
    if (mass === undefined) throw new Error(`pmf is missing option ${s}`);
    return mass;
  }) as [number, number, number];
  return { point: [masses[0], masses[1]], masses, options: sorted };
}

export function pmfTotal(pmf: Record<string, number>): number {
  return Object.values(pmf).reduce((a, b) => a + b, 0);
}

// Euclidean distance from the full mass vector to the uniform center.
export function distanceToCenter(masses: [number, number, number]): number {
  return Math.hypot(masses[0] - 1 / 3, masses[1] - 1 / 3, masses[2] - 1 / 3);
}

// 0 at any vertex (certain), 1 at the center (maximally uncertain).
const VERTEX_DISTANCE = distanceToCenter([1, 0, 0]);

export function uncertaintyScore(masses: [number, number, number]): number {
  return 1 - distanceToCenter(masses) / VERTEX_DISTANCE;
}

// Map simplex coordinates (p1, p2) to SVG pixels: the right-angle simplex
// {p1 >= 0, p2 >= 0, p1 + p2 <= 1} drawn in a size x size viewport with the
// SVG y-axis flipped so p2 increases upward.
export function toSvg(
  point: [number, number],
  size: number,
): { x: number; y: number } {
  return { x: point[0] * size, y: size - point[1] * size };
}
