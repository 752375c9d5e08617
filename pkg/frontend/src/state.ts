/**
 * Query form state and the single-in-flight query runner. Selector options
 * come exclusively from the vocabulary endpoint; a submission is blocked
 * while every descriptor field is empty.
 */

import { ApiClient, QueryRequest, QueryResponse, VocabularyResponse } from './api.js';

export const DESCRIPTOR_FIELDS = [
  'height_class',
  'torso_primary_color',
  'torso_secondary_color',
  'torso_type',
  'torso_pattern',
  'leg_primary_color',
  'leg_secondary_color',
  'leg_pattern',
  'gender',
] as const;

export type DescriptorField = (typeof DESCRIPTOR_FIELDS)[number];

export function optionsForField(
  vocab: VocabularyResponse,
  field: DescriptorField,
): string[] {
  switch (field) {
    case 'height_class':
      return vocab.vocabulary.height_classes.map((hc) => hc.label);
    case 'torso_primary_color':
    case 'torso_secondary_color':
    case 'leg_primary_color':
    case 'leg_secondary_color':
      return vocab.vocabulary.colors;
    case 'torso_type':
      return vocab.vocabulary.torso_types;
    case 'torso_pattern':
      return vocab.vocabulary.torso_patterns;
    case 'leg_pattern':
      return vocab.vocabulary.leg_patterns;
    case 'gender':
      return vocab.vocabulary.genders;
  }
}

export class QueryFormState {
  sequenceId: string | null = null;
  startFrame: number | null = null;
  endFrame: number | null = null;
  private readonly fields = new Map<DescriptorField, string>();

  setField(field: DescriptorField, value: string | null): void {
    if (value === null || value === '') {
      this.fields.delete(field);
    } else {
      this.fields.set(field, value);
    }
  }

  getField(field: DescriptorField): string | null {
    return this.fields.get(field) ?? null;
  }

  descriptorCount(): number {
    return this.fields.size;
  }

  /** Submission needs a sequence and at least one descriptor. */
  isSubmittable(): boolean {
    return this.sequenceId !== null && this.fields.size > 0;
  }

  toDescription(): Record<string, string> {
    const description: Record<string, string> = {};
    for (const field of DESCRIPTOR_FIELDS) {
      const value = this.fields.get(field);
      if (value !== undefined) description[field] = value;
    }
    return description;
  }

  toRequest(): QueryRequest {
    if (!this.isSubmittable() || this.sequenceId === null) {
      throw new Error('form is not submittable');
    }
    const request: QueryRequest = {
      sequence_id: this.sequenceId,
      description: this.toDescription(),
    };
    if (this.startFrame !== null) request.start_frame = this.startFrame;
    if (this.endFrame !== null) request.end_frame = this.endFrame;
    return request;
  }
}

/**
 * At most one query in flight: submitting again aborts the previous request,
 * and a stale response is never delivered.
 */
export class QueryRunner {
  private controller: AbortController | null = null;
  private generation = 0;

  constructor(private readonly client: ApiClient) {}

  async run(request: QueryRequest): Promise<QueryResponse | null> {
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    const generation = ++this.generation;
    try {
      const response = await this.client.query(request, controller.signal);
      if (generation !== this.generation) return null; // superseded
      return response;
    } catch (error) {
      if (controller.signal.aborted && generation !== this.generation) {
        return null; // cancelled by a newer submission
      }
      throw error;
    }
  }
}
