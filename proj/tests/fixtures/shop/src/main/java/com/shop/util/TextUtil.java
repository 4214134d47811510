package com.shop.util;

public final class TextUtil {

    public static String padLeft(String s, int width) {
        StringBuilder sb = new StringBuilder();
        for (int i = s.length(); i < width; i++) {
            sb.append(' ');
        }
        return sb.append(s).toString();
    }

    public static String formatMoney(double amount) {
        return String.format("$%.2f", amount);
    }

    public static String slug(String text) {
        return text.trim().toLowerCase().replaceAll("[^a-z0-9]+", "-");
    }

    public static boolean isBlank(String s) {
        return s == null || s.trim().isEmpty();
    }
}
